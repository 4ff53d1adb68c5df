"""Evidence-then-sample Bayesian network, plus plain HMC for comparison.

The hybrid fit optimizes the prior precisions with the evidence procedure
and then runs HMC from ``w_MAP`` with the precisions frozen at their
evidence values. Plain HMC samples at a fixed user-supplied alpha from
independent random initializations.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import network as net
from .errors import InvalidInputError, NotApplicableError, PoissonBnnError
from .evidence import EvidenceSettings, EvidenceState, run_evidence
from .hmc import HmcSettings, NetworkPotential, PredictiveSummary, predictive_summary, run_chain
from .objective import NetworkProblem, PriorSpec
from .seeds import derive_seed, rng_for

log = logging.getLogger(__name__)

JITTER_SD = 0.01


@dataclass
class SampledModel:
    cfg: net.NetworkConfig
    prior: PriorSpec
    chains: list
    kind: str = "hybrid"
    evidence: EvidenceState | None = None
    failures: list = field(default_factory=list)
    init_points: list = field(default_factory=list)
    covariates: list = field(default_factory=list)

    def summary(self, X, t_query=None) -> PredictiveSummary:
        return predictive_summary(self.cfg, self.chains, X, t_query)

    def predict(self, X) -> np.ndarray:
        return self.summary(X).mean


def _run_chains(cfg, X, t, prior, starts, hmc: HmcSettings, seed, kind):
    potential = NetworkPotential(cfg, X, t, prior)
    chains, failures = [], []
    for j, w0 in enumerate(starts):
        settings = replace(hmc, seed=derive_seed(seed, kind, "chain", j))
        try:
            chains.append(run_chain(potential, w0, settings))
        except PoissonBnnError as exc:
            log.warning("chain %d failed: %s", j, exc)
            failures.append((j, str(exc)))
    if not chains:
        raise PoissonBnnError(f"all {len(starts)} chains failed: {failures}")
    return chains, failures


def fit_hybrid(cfg: net.NetworkConfig, X, t, prior0: PriorSpec,
               evidence: EvidenceSettings = EvidenceSettings(),
               hmc: HmcSettings = HmcSettings(), n_chains: int = 1, seed: int = 0,
               covariates=None) -> SampledModel:
    """Evidence procedure, then ``n_chains`` HMC chains at ``alpha_MAP``.

    Chain 0 starts exactly at ``w_MAP``; later chains add N(0, 0.01^2)
    jitter drawn from a seed derived from ``seed``.
    """
    if n_chains < 1:
        raise InvalidInputError("n_chains must be >= 1")
    w_init = net.init_weights(cfg, rng_for(seed, "hybrid", "init"))
    state = run_evidence(NetworkProblem(cfg, X, t), prior0, evidence, w_init)
    starts = [state.w_map.copy()]
    for j in range(1, n_chains):
        jitter = rng_for(seed, "hybrid", "jitter", j).normal(0.0, JITTER_SD, cfg.n_weights)
        starts.append(state.w_map + jitter)
    chains, failures = _run_chains(cfg, X, t, state.prior, starts, hmc, seed, "hybrid")
    return SampledModel(cfg, state.prior, chains, "hybrid", state, failures, starts,
                        list(covariates or []))


def fit_hmc(cfg: net.NetworkConfig, X, t, prior: PriorSpec, hmc: HmcSettings = HmcSettings(),
            n_chains: int = 1, seed: int = 0, covariates=None) -> SampledModel:
    """Plain HMC at fixed ``prior``; each chain starts from its own random init."""
    if n_chains < 1:
        raise InvalidInputError("n_chains must be >= 1")
    starts = [net.init_weights(cfg, rng_for(seed, "hmc", "init", j)) for j in range(n_chains)]
    chains, failures = _run_chains(cfg, X, t, prior, starts, hmc, seed, "hmc")
    return SampledModel(cfg, prior, chains, "hmc", None, failures, starts, list(covariates or []))


@dataclass
class RelevanceRow:
    covariate: str
    alpha: float
    rank: int


def ard_report(model) -> list:
    """Covariates ordered from most to least relevant (ascending alpha).

    Equal alphas share the lower rank; ties are listed in covariate order.
    Accepts a :class:`SampledModel` or a :class:`PriorSpec`.
    """
    prior = model if isinstance(model, PriorSpec) else model.prior
    if prior.mode != "ard":
        raise NotApplicableError("relevance report needs a per-covariate (ARD) prior")
    d = prior.n_groups - 3
    alphas = prior.group_alphas[:d]
    names = list(prior.names[:d]) if prior.names else [f"x{i + 1}" for i in range(d)]
    if not isinstance(model, PriorSpec) and model.covariates:
        names = list(model.covariates)
    order = sorted(range(d), key=lambda i: (alphas[i], i))
    rows = []
    for pos, i in enumerate(order):
        if pos and alphas[i] == rows[-1].alpha:
            rank = rows[-1].rank
        else:
            rank = pos + 1
        rows.append(RelevanceRow(names[i], float(alphas[i]), rank))
    return rows
