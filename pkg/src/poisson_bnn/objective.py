"""Gaussian weight prior, Poisson likelihood and the regularized error.

``S(w) = E_D(w) + sum_g alpha_g * E_{w,g}`` where ``E_D`` is the Poisson
negative log-likelihood and ``E_{w,g} = 0.5 * sum_{i in g} w_i**2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import network as net
from .errors import DomainError, InvalidInputError, InvalidTargetError


@dataclass(frozen=True)
class PriorSpec:
    """Per-group precisions of the zero-mean Gaussian weight prior.

    ``mode='single'`` carries one alpha shared by every group; ``mode='ard'``
    carries one alpha per group (covariate fan-outs, b1, w2, b2).
    """

    mode: str
    alphas: np.ndarray
    groups: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        if self.mode not in ("single", "ard"):
            raise InvalidInputError(f"unknown prior mode {self.mode!r}")
        alphas = np.atleast_1d(np.asarray(self.alphas, dtype=float)).copy()
        groups = np.asarray(self.groups, dtype=np.intp).copy()
        if self.mode == "single" and alphas.size != 1:
            raise InvalidInputError("single-alpha prior takes exactly one alpha")
        n_groups = int(groups.max()) + 1 if groups.size else 0
        if self.mode == "ard" and alphas.size != n_groups:
            raise InvalidInputError(f"ard prior needs {n_groups} alphas, got {alphas.size}")
        if groups.size and (groups.min() < 0 or np.setdiff1d(np.arange(n_groups), groups).size):
            raise InvalidInputError("group map must use contiguous ids 0..G-1")
        if not np.all(np.isfinite(alphas)) or np.any(alphas < 0):
            raise InvalidInputError("alphas must be finite and non-negative")
        alphas.setflags(write=False)
        groups.setflags(write=False)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def single(cls, cfg: net.NetworkConfig, alpha: float, names=None):
        return cls("single", [alpha], cfg.group_index(), tuple(cfg.group_names(names)))

    @classmethod
    def ard(cls, cfg: net.NetworkConfig, alpha, names=None):
        alphas = np.asarray(alpha, dtype=float)
        if alphas.ndim and alphas.size != cfg.n_groups:
            raise InvalidInputError(f"ard prior needs {cfg.n_groups} alphas, got {alphas.size}")
        alphas = np.broadcast_to(alphas, (cfg.n_groups,))
        return cls("ard", alphas, cfg.group_index(), tuple(cfg.group_names(names)))

    @property
    def n_groups(self) -> int:
        return int(self.groups.max()) + 1 if self.groups.size else 0

    @property
    def group_alphas(self) -> np.ndarray:
        """Alpha for every group (single mode broadcasts its one value)."""
        return np.broadcast_to(self.alphas, (self.n_groups,)).copy()

    @property
    def per_weight(self) -> np.ndarray:
        return self.group_alphas[self.groups]

    def with_alphas(self, alphas) -> "PriorSpec":
        return PriorSpec(self.mode, alphas, self.groups, self.names)


@dataclass
class ObjectiveValue:
    total: float
    data: float
    penalties: np.ndarray = field(repr=False)


def poisson_nll(rates, t) -> float:
    """``sum(rate - t * log(rate))``; the ``log t!`` constant is omitted."""
    rates = np.asarray(rates, dtype=float)
    t = np.asarray(t, dtype=float)
    if rates.shape != t.shape:
        raise InvalidInputError("rates and targets differ in shape")
    if np.any(~(rates > 0)) or not np.all(np.isfinite(rates)):
        raise DomainError("rates must be positive and finite")
    if np.any(t < 0) or np.any(t != np.round(t)):
        raise InvalidTargetError("targets must be non-negative integers")
    return float(np.sum(rates - t * np.log(rates)))


def weight_penalty(w, prior: PriorSpec) -> np.ndarray:
    """``E_{w,g} = 0.5 * sum_{i in g} w_i**2`` for every group."""
    w = np.asarray(w, dtype=float)
    if w.shape != prior.groups.shape:
        raise InvalidInputError(f"weight vector shape {w.shape} does not match group map")
    return 0.5 * np.bincount(prior.groups, weights=w * w, minlength=prior.n_groups)


class Problem:
    """Data-error oracle; subclasses supply ``data_error`` and ``data_grad``."""

    n_weights: int

    def data_error(self, w) -> float:
        raise NotImplementedError

    def data_grad(self, w) -> np.ndarray:
        raise NotImplementedError

    def data_hessian(self, w) -> np.ndarray:
        return net.fd_hessian(self.data_grad, w)

    def objective(self, w, prior: PriorSpec) -> ObjectiveValue:
        pen = weight_penalty(w, prior)
        data = self.data_error(w)
        return ObjectiveValue(data + float(prior.group_alphas @ pen), data, pen)

    def objective_grad(self, w, prior: PriorSpec) -> np.ndarray:
        return self.data_grad(w) + prior.per_weight * np.asarray(w, dtype=float)


class NetworkProblem(Problem):
    """Poisson network data error on a fixed dataset."""

    def __init__(self, cfg: net.NetworkConfig, X, t):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != cfg.n_inputs:
            raise InvalidInputError(f"X must have shape (N, {cfg.n_inputs})")
        self.cfg = cfg
        self.X = X
        self.t = net.check_targets(t)
        if self.t.shape[0] != X.shape[0]:
            raise InvalidInputError("X and t have different row counts")
        self.n_weights = cfg.n_weights

    def rates(self, w, X=None):
        return net.forward_batch(self.cfg, w, self.X if X is None else X)

    def data_error(self, w):
        return net.data_error(self.cfg, w, self.X, self.t)

    def data_grad(self, w):
        return net.grad_data_error(self.cfg, w, self.X, self.t)


class QuadraticProblem(Problem):
    """Test hook: ``E_D = 0.5 (w - m)^T Q (w - m)`` with known Hessian ``Q``."""

    def __init__(self, Q, m=None):
        self.Q = np.asarray(Q, dtype=float)
        self.n_weights = self.Q.shape[0]
        self.m = np.zeros(self.n_weights) if m is None else np.asarray(m, dtype=float)

    def data_error(self, w):
        r = np.asarray(w, dtype=float) - self.m
        return 0.5 * float(r @ self.Q @ r)

    def data_grad(self, w):
        return self.Q @ (np.asarray(w, dtype=float) - self.m)


def regularized_error(cfg, w, X, t, prior: PriorSpec) -> ObjectiveValue:
    return NetworkProblem(cfg, X, t).objective(w, prior)


def grad_regularized(cfg, w, X, t, prior: PriorSpec) -> np.ndarray:
    return NetworkProblem(cfg, X, t).objective_grad(w, prior)
