"""Evidence procedure: alternate weight optimization and alpha re-estimation.

At a minimum ``w_MAP`` of ``S`` the number of well-determined parameters is
``gamma = sum_i lam_i / (lam_i + alpha)`` over the eigenvalues ``lam_i`` of
the data-error Hessian, and the new precision is ``gamma / (2 E_w)``. With a
relevance-determination prior the same update runs per group using
``gamma_g = sum_{i in g} (1 - alpha_g [A^-1]_ii)`` where
``A = H_D + diag(alpha)``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DegeneratePosteriorError, InvalidInputError, OptimizationError
from .objective import PriorSpec, Problem, weight_penalty
from .training import TrainSettings, minimize

log = logging.getLogger(__name__)

ALPHA_MIN = 1e-8
ALPHA_MAX = 1e8


@dataclass(frozen=True)
class EvidenceSettings:
    max_outer: int = 20
    alpha_tol: float = 1e-3
    eig_floor: float = 0.0
    train: TrainSettings = TrainSettings()

    def __post_init__(self):
        if self.max_outer < 1:
            raise InvalidInputError("max_outer must be >= 1")
        if not self.alpha_tol > 0:
            raise InvalidInputError("alpha_tol must be positive")


@dataclass
class EvidenceState:
    w_map: np.ndarray
    prior: PriorSpec
    gammas: np.ndarray
    eigenvalues: np.ndarray
    a_inv_diag: np.ndarray | None
    log: list = field(default_factory=list)
    converged: bool = False

    @property
    def alphas(self) -> np.ndarray:
        return self.prior.group_alphas


def _clamp(alpha, what="alpha"):
    a = np.asarray(alpha, dtype=float)
    out = np.clip(a, ALPHA_MIN, ALPHA_MAX)
    if np.any(out != a):
        warnings.warn(f"{what} clamped to [{ALPHA_MIN:g}, {ALPHA_MAX:g}]", RuntimeWarning,
                      stacklevel=3)
    return out


def gamma_single(eigenvalues, alpha: float, floor: float = 0.0) -> float:
    """Effective number of well-determined parameters."""
    if not alpha > 0:
        raise InvalidInputError("alpha must be positive")
    lam = np.maximum(np.asarray(eigenvalues, dtype=float), floor)
    return float(np.sum(lam / (lam + alpha)))


def reestimate_alpha_single(gamma: float, e_w: float) -> float:
    """``gamma / (2 E_w)``, clamped to ``[ALPHA_MIN, ALPHA_MAX]``."""
    if not e_w > 0:
        raise DegeneratePosteriorError("penalty energy is zero; keep the previous alpha")
    return float(_clamp(gamma / (2.0 * e_w)))


def floored_hessian(H, floor: float = 0.0):
    """Eigen-decompose ``H`` and clamp eigenvalues below ``floor``.

    Returns ``(eigenvalues_floored, H_floored)``.
    """
    lam, V = np.linalg.eigh(0.5 * (H + H.T))
    lam = np.maximum(lam, floor)
    return lam, (V * lam) @ V.T


def a_inverse_diagonal(H_floored, per_weight_alpha) -> np.ndarray:
    A = H_floored + np.diag(per_weight_alpha)
    try:
        c = scipy.linalg.cho_factor(A)
    except np.linalg.LinAlgError:
        jitter = 1e-6 * np.trace(A) / A.shape[0]
        if not jitter > 0:
            jitter = 1e-6
        log.info("A not positive definite; adding jitter %.3g to the diagonal", jitter)
        A = A + jitter * np.eye(A.shape[0])
        c = scipy.linalg.cho_factor(A)
    return np.diag(scipy.linalg.cho_solve(c, np.eye(A.shape[0])))


def gamma_ard(a_inv_diag, prior: PriorSpec) -> np.ndarray:
    per = 1.0 - prior.per_weight * np.asarray(a_inv_diag, dtype=float)
    gam = np.bincount(prior.groups, weights=per, minlength=prior.n_groups)
    sizes = np.bincount(prior.groups, minlength=prior.n_groups)
    return np.clip(gam, 0.0, sizes)


def reestimate_alpha_ard(a_inv_diag, prior: PriorSpec, w_map):
    """Per-group update ``alpha_g = gamma_g / (2 E_{w,g})``.

    Groups whose penalty energy is exactly zero keep their previous alpha.
    Returns ``(new_alphas, gammas)``.
    """
    gam = gamma_ard(a_inv_diag, prior)
    e_w = weight_penalty(w_map, prior)
    old = prior.group_alphas
    new = old.copy()
    ok = e_w > 0
    if not ok.all():
        warnings.warn("zero penalty energy in some groups; their alpha is unchanged",
                      RuntimeWarning, stacklevel=2)
    new[ok] = gam[ok] / (2.0 * e_w[ok])
    return _clamp(new), gam


def _reestimate(problem, prior, w, settings):
    H = problem.data_hessian(w)
    lam, Hf = floored_hessian(H, settings.eig_floor)
    if prior.mode == "single":
        gam = gamma_single(lam, float(prior.alphas[0]))
        e_w = float(weight_penalty(w, prior).sum())
        try:
            new = np.array([reestimate_alpha_single(gam, e_w)])
        except DegeneratePosteriorError:
            warnings.warn("zero penalty energy; alpha unchanged", RuntimeWarning, stacklevel=3)
            new = prior.alphas.copy()
        return new, np.array([gam]), lam, None
    a_inv = a_inverse_diagonal(Hf, prior.per_weight)
    new, gam = reestimate_alpha_ard(a_inv, prior, w)
    return new, gam, lam, a_inv


def run_evidence(problem: Problem, prior0: PriorSpec,
                 settings: EvidenceSettings = EvidenceSettings(), w0=None) -> EvidenceState:
    """Iterate minimize / re-estimate until alphas settle.

    Stops once ``max |alpha_new - alpha| / alpha < alpha_tol`` or after
    ``max_outer`` re-estimations. The Hessian is recomputed at every outer
    iteration. The returned ``w_MAP`` is re-optimized at the final alphas
    (warm started), so it is the mode of the posterior the sampler targets.
    """
    if np.any(prior0.alphas <= 0):
        raise InvalidInputError("initial alphas must be positive")
    prior = prior0
    w = None if w0 is None else np.asarray(w0, dtype=float)
    history = []
    converged = False
    gam = lam = a_inv = None
    for k in range(settings.max_outer):
        try:
            res = minimize(problem, prior, settings.train, w)
        except OptimizationError as exc:
            exc.partial = {"prior": prior, "log": history}
            raise
        w = res.w
        new, gam, lam, a_inv = _reestimate(problem, prior, w, settings)
        old = prior.alphas
        change = float(np.max(np.abs(new - old) / old))
        history.append({
            "iteration": k + 1,
            "alphas": old.copy(),
            "new_alphas": new.copy(),
            "gammas": np.atleast_1d(gam).copy(),
            "objective": res.value.total,
            "data_error": res.value.data,
            "inner_iterations": res.n_iter,
            "inner_converged": res.converged,
            "rel_change": change,
        })
        log.debug("evidence iter %d: alphas %s -> %s", k + 1, old, new)
        prior = prior.with_alphas(new)
        if change < settings.alpha_tol:
            converged = True
            break
    res = minimize(problem, prior, settings.train, w)
    return EvidenceState(res.w, prior, np.atleast_1d(gam), lam, a_inv, history, converged)
