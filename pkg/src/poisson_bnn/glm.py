"""Linear Poisson regression (log link) fitted by Newton / IRLS."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .errors import GlmConvergenceError, InvalidInputError, SingularDesignError
from .network import check_targets


@dataclass
class GlmFit:
    coef: np.ndarray          # intercept first, then one slope per covariate
    converged: bool
    n_iter: int
    deviance: float
    deviance_trace: list = field(default_factory=list)

    @property
    def intercept(self) -> float:
        return float(self.coef[0])


def poisson_deviance(t, rates) -> float:
    t = np.asarray(t, dtype=float)
    return float(2.0 * np.sum(xlogy(t, t) - xlogy(t, rates) - (t - rates)))


def _design(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("covariates contain non-finite values")
    return np.column_stack([np.ones(X.shape[0]), X])


def fit_glm(X, t, max_iter: int = 100, tol: float = 1e-10) -> GlmFit:
    """Maximum-likelihood Poisson regression from ``beta = 0``.

    Each Newton step is halved until the deviance does not increase, so the
    recorded deviance trace is non-increasing. Converged when
    ``max|delta beta| < tol``.
    """
    Z = _design(X)
    t = check_targets(t)
    n, k = Z.shape
    if t.shape[0] != n:
        raise InvalidInputError("X and t have different row counts")
    if n <= k:
        raise InvalidInputError(f"need more than {k} rows to fit {k} coefficients")
    if np.linalg.matrix_rank(Z) < k:
        raise SingularDesignError("design matrix (with intercept) is rank deficient")
    beta = np.zeros(k)
    eta = Z @ beta
    mu = np.exp(eta)
    dev = poisson_deviance(t, mu)
    trace = [dev]
    for it in range(1, max_iter + 1):
        score = Z.T @ (t - mu)
        info = Z.T @ (Z * mu[:, None])
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError as exc:
            raise GlmConvergenceError("information matrix is singular", trace) from exc
        if np.max(np.abs(step)) < tol:
            beta = beta + step
            mu = np.exp(Z @ beta)
            dev = poisson_deviance(t, mu)
            trace.append(dev)
            return GlmFit(beta, True, it, dev, trace)
        scale = 1.0
        while True:
            cand = beta + scale * step
            with np.errstate(over="ignore"):
                mu_c = np.exp(Z @ cand)
            dev_c = poisson_deviance(t, mu_c) if np.all(np.isfinite(mu_c)) else np.inf
            if dev_c <= dev + 1e-13 * abs(dev):
                break
            scale *= 0.5
            if scale < 1e-12:
                raise GlmConvergenceError("step halving failed to reduce the deviance", trace)
        delta = cand - beta
        beta, mu, dev = cand, mu_c, dev_c
        trace.append(dev)
        if np.max(np.abs(delta)) < tol:
            return GlmFit(beta, True, it, dev, trace)
    return GlmFit(beta, False, max_iter, dev, trace)


def predict_glm(fit: GlmFit, X) -> np.ndarray:
    Z = _design(X)
    if Z.shape[1] != fit.coef.size:
        raise InvalidInputError(f"expected {fit.coef.size - 1} covariates, got {Z.shape[1] - 1}")
    return np.exp(Z @ fit.coef)
