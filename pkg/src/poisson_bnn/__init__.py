"""Nonlinear Poisson regression with a one-hidden-layer network.

Fitting routes: penalized maximum likelihood committees, plain HMC, and
the evidence-then-HMC hybrid, compared against a log-link Poisson GLM.
"""

from .data import Dataset, load_csv, simulate, split
from .diagnostics import epsr, epsr_report, metrics
from .evidence import EvidenceSettings, run_evidence
from .glm import fit_glm, predict_glm
from .hmc import HmcSettings, run_chain
from .hybrid import ard_report, fit_hmc, fit_hybrid
from .network import NetworkConfig
from .objective import PriorSpec
from .training import TrainSettings, minimize, train_committee

__version__ = "0.1.0"

__all__ = [
    "Dataset", "EvidenceSettings", "HmcSettings", "NetworkConfig", "PriorSpec",
    "TrainSettings", "ard_report", "epsr", "epsr_report", "fit_glm", "fit_hmc",
    "fit_hybrid", "load_csv", "metrics", "minimize", "predict_glm", "run_chain",
    "run_evidence", "simulate", "split", "train_committee",
]
