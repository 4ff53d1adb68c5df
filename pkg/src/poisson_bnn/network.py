"""Single-hidden-layer Poisson network: tanh hidden units, exponential output.

The flat weight vector is laid out covariate by covariate so that every
input's fan-out weights are contiguous::

    [w1[:, 0], w1[:, 1], ..., w1[:, d-1], b1, w2, b2]

with ``w1`` of shape ``(M, d)``. Each covariate block, the hidden biases, the
second-layer weights and the output bias form the prior groups used by the
relevance-determination prior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, InvalidTargetError, NetworkOverflowError

DEFAULT_CAP = 700.0


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture of a ``d``-``M``-1 network.

    Parameters
    ----------
    n_inputs : int
        Number of covariates ``d``.
    n_hidden : int
        Number of tanh hidden units ``M``.
    cap : float
        Largest admissible output pre-activation before ``exp``.
    """

    n_inputs: int
    n_hidden: int
    cap: float = DEFAULT_CAP

    def __post_init__(self):
        if int(self.n_inputs) != self.n_inputs or self.n_inputs < 1:
            raise InvalidInputError(f"n_inputs must be a positive integer, got {self.n_inputs}")
        if int(self.n_hidden) != self.n_hidden or self.n_hidden < 1:
            raise InvalidInputError(f"n_hidden must be a positive integer, got {self.n_hidden}")
        if not self.cap > 0:
            raise InvalidInputError("cap must be positive")

    @property
    def n_weights(self) -> int:
        d, m = self.n_inputs, self.n_hidden
        return m * d + m + m + 1

    @property
    def n_groups(self) -> int:
        return self.n_inputs + 3

    def group_index(self) -> np.ndarray:
        """Group id of every flat index: covariates ``0..d-1``, then b1, w2, b2."""
        d, m = self.n_inputs, self.n_hidden
        return np.concatenate([
            np.repeat(np.arange(d), m),
            np.full(m, d),
            np.full(m, d + 1),
            [d + 2],
        ]).astype(np.intp)

    def group_names(self, covariates=None) -> list[str]:
        covariates = covariates or [f"x{i + 1}" for i in range(self.n_inputs)]
        if len(covariates) != self.n_inputs:
            raise InvalidInputError("covariate name count does not match n_inputs")
        return list(covariates) + ["b1", "w2", "b2"]

    def weight_names(self) -> list[str]:
        """Names like ``w1_j_i`` (hidden j, input i), ``b1_j``, ``w2_j``, ``b2``; 1-based."""
        d, m = self.n_inputs, self.n_hidden
        names = [f"w1_{j + 1}_{i + 1}" for i in range(d) for j in range(m)]
        names += [f"b1_{j + 1}" for j in range(m)]
        names += [f"w2_{j + 1}" for j in range(m)]
        names.append("b2")
        return names


def unpack(cfg: NetworkConfig, w):
    """Split a flat vector into ``(w1, b1, w2, b2)`` with ``w1`` of shape (M, d)."""
    w = np.asarray(w, dtype=float)
    if w.shape != (cfg.n_weights,):
        raise InvalidInputError(f"expected {cfg.n_weights} weights, got shape {w.shape}")
    d, m = cfg.n_inputs, cfg.n_hidden
    w1 = w[: m * d].reshape(d, m).T
    b1 = w[m * d: m * d + m]
    w2 = w[m * d + m: m * d + 2 * m]
    b2 = float(w[-1])
    return w1, b1, w2, b2


def pack(cfg: NetworkConfig, w1, b1, w2, b2) -> np.ndarray:
    d, m = cfg.n_inputs, cfg.n_hidden
    w1 = np.asarray(w1, dtype=float)
    if w1.shape != (m, d):
        raise InvalidInputError(f"w1 must have shape {(m, d)}, got {w1.shape}")
    b1 = np.asarray(b1, dtype=float).reshape(m)
    w2 = np.asarray(w2, dtype=float).reshape(m)
    return np.concatenate([w1.T.ravel(), b1, w2, [float(b2)]])


def init_weights(cfg: NetworkConfig, rng: np.random.Generator) -> np.ndarray:
    """Gaussian initialization with sd ``1/sqrt(fan_in)`` per layer."""
    d, m = cfg.n_inputs, cfg.n_hidden
    w1 = rng.normal(0.0, 1.0 / np.sqrt(d), size=(m, d))
    b1 = rng.normal(0.0, 1.0 / np.sqrt(d), size=m)
    w2 = rng.normal(0.0, 1.0 / np.sqrt(m), size=m)
    b2 = rng.normal(0.0, 1.0 / np.sqrt(m))
    return pack(cfg, w1, b1, w2, b2)


def _check_inputs(cfg, w, X):
    w = np.asarray(w, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != cfg.n_inputs:
        raise InvalidInputError(f"X must have shape (N, {cfg.n_inputs}), got {X.shape}")
    if not np.all(np.isfinite(w)):
        raise InvalidInputError("weights contain non-finite values")
    bad = ~np.all(np.isfinite(X), axis=1)
    if bad.any():
        raise InvalidInputError(f"non-finite covariate at row {int(np.argmax(bad))}")
    return w, X


def check_targets(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if t.ndim != 1:
        raise InvalidTargetError("targets must be a 1-D vector")
    if t.size and (not np.all(np.isfinite(t)) or np.any(t < 0) or np.any(t != np.round(t))):
        raise InvalidTargetError("targets must be non-negative integers")
    return t


def _propagate(cfg, w, X):
    w1, b1, w2, b2 = unpack(cfg, w)
    # explicit accumulation in a fixed order, so a row's rate does not depend
    # on which batch it was evaluated in (BLAS blocking would break that)
    z = np.tile(b1, (X.shape[0], 1))
    for i in range(cfg.n_inputs):
        z += np.multiply.outer(X[:, i], w1[:, i])
    h = np.tanh(z)
    a = np.full(X.shape[0], b2)
    for j in range(cfg.n_hidden):
        a += h[:, j] * w2[j]
    over = a > cfg.cap
    if over.any():
        row = int(np.argmax(over))
        raise NetworkOverflowError(row, a[row], cfg.cap)
    return h, a, np.exp(a)


def forward_batch(cfg: NetworkConfig, w, X) -> np.ndarray:
    """Rates ``y(x; w)`` for every row of ``X`` (shape (N, d))."""
    w, X = _check_inputs(cfg, w, X)
    return _propagate(cfg, w, X)[2]


def forward(cfg: NetworkConfig, w, x) -> float:
    """Rate for a single covariate vector of length ``d``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (cfg.n_inputs,):
        raise InvalidInputError(f"x must have length {cfg.n_inputs}, got shape {x.shape}")
    return float(forward_batch(cfg, w, x[None, :])[0])


def data_error(cfg: NetworkConfig, w, X, t) -> float:
    """Poisson negative log-likelihood ``sum(y - t log y)`` (``log t!`` dropped)."""
    w, X = _check_inputs(cfg, w, X)
    t = check_targets(t)
    if X.shape[0] == 0:
        return 0.0
    _, a, y = _propagate(cfg, w, X)
    return float(np.sum(y - t * a))


def grad_data_error(cfg: NetworkConfig, w, X, t) -> np.ndarray:
    """Back-propagated gradient of :func:`data_error`.

    With the exponential output and Poisson error the output delta is simply
    ``y - t``.
    """
    w, X = _check_inputs(cfg, w, X)
    t = check_targets(t)
    if X.shape[0] == 0:
        return np.zeros(cfg.n_weights)
    _, _, w2, _ = unpack(cfg, w)
    h, _, y = _propagate(cfg, w, X)
    delta = y - t
    g_w2 = h.T @ delta
    g_b2 = delta.sum()
    dz = np.outer(delta, w2) * (1.0 - h * h)
    g_w1 = dz.T @ X
    g_b1 = dz.sum(axis=0)
    return pack(cfg, g_w1, g_b1, g_w2, g_b2)


def fd_hessian(grad, w, rel_step=1e-5, symmetrize=True) -> np.ndarray:
    """Hessian by central differences of an analytic gradient.

    Column ``i`` uses step ``rel_step * (1 + |w_i|)``.
    """
    w = np.asarray(w, dtype=float)
    n = w.size
    H = np.empty((n, n))
    for i in range(n):
        h = rel_step * (1.0 + abs(w[i]))
        wp = w.copy()
        wm = w.copy()
        wp[i] += h
        wm[i] -= h
        H[:, i] = (grad(wp) - grad(wm)) / (2.0 * h)
    if symmetrize:
        H = 0.5 * (H + H.T)
    return H


def hessian_data_error(cfg: NetworkConfig, w, X, t, symmetrize=True) -> np.ndarray:
    return fd_hessian(lambda v: grad_data_error(cfg, v, X, t), w, symmetrize=symmetrize)
