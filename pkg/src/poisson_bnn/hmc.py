"""Hybrid Monte Carlo over network weights and the finite-sum predictive.

The potential is the regularized error ``S(w)`` at fixed prior precisions,
momenta are standard normal (identity mass matrix) and proposals come from
leapfrog integration followed by a Metropolis accept/reject.
"""

from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _kernels
from . import network as net
from .errors import ChainError, InvalidInputError, NetworkOverflowError
from .objective import PriorSpec

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HmcSettings:
    """Sampler settings.

    Step size adapts only during burn-in: every ``adapt_every`` steps it is
    multiplied by 1.1 when the block's acceptance exceeds the target window
    and by 0.9 when it falls below. It is frozen for the retained phase.
    """

    step_size: float = 0.01
    n_leapfrog: int = 100
    burn_in: int = 5000
    n_samples: int = 5000
    thin: int = 1
    target_accept: tuple = (0.6, 0.9)
    adapt_every: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.step_size < 0 or not np.isfinite(self.step_size):
            raise InvalidInputError("step_size must be finite and >= 0")
        if self.n_leapfrog < 1:
            raise InvalidInputError("n_leapfrog must be >= 1")
        if self.n_samples < 1 or self.burn_in < 0 or self.thin < 1:
            raise InvalidInputError("need n_samples >= 1, burn_in >= 0, thin >= 1")
        lo, hi = self.target_accept
        if not 0 <= lo <= hi <= 1:
            raise InvalidInputError("target_accept must be a sub-interval of [0, 1]")
        object.__setattr__(self, "target_accept", (float(lo), float(hi)))


class TrajectoryDiverged(ArithmeticError):
    pass


class Potential:
    """Energy ``U(w)`` and its gradient."""

    n_weights: int

    def energy(self, w) -> float:
        raise NotImplementedError

    def gradient(self, w) -> np.ndarray:
        raise NotImplementedError

    def trajectory(self, w, p, g, eps, n_steps):
        """Integrate and return ``(w, p, g, U)``; raise TrajectoryDiverged."""
        w, p, g = _leapfrog(w, p, eps, n_steps, self.gradient, g)
        U = self.energy(w)
        if not np.isfinite(U):
            raise TrajectoryDiverged("non-finite energy at trajectory end")
        return w, p, g, U


class GaussianPotential(Potential):
    """Test hook: ``U = 0.5 w^T P w`` (zero-mean Gaussian with precision P)."""

    def __init__(self, precision):
        self.P = np.atleast_2d(np.asarray(precision, dtype=float))
        self.n_weights = self.P.shape[0]

    def energy(self, w):
        w = np.asarray(w, dtype=float)
        return 0.5 * float(w @ self.P @ w)

    def gradient(self, w):
        return self.P @ np.asarray(w, dtype=float)


class FunctionPotential(Potential):
    def __init__(self, energy, gradient, n_weights):
        self._energy = energy
        self._gradient = gradient
        self.n_weights = n_weights

    def energy(self, w):
        return float(self._energy(w))

    def gradient(self, w):
        return np.asarray(self._gradient(w), dtype=float)


def data_hash(X, t) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype=float).tobytes())
    h.update(np.ascontiguousarray(t, dtype=float).tobytes())
    return h.hexdigest()[:16]


class NetworkPotential(Potential):
    """``S(w)`` of a Poisson network at fixed prior precisions.

    ``trajectory`` runs in a compiled kernel; ``energy``/``gradient`` use the
    numpy implementation in :mod:`network`.
    """

    def __init__(self, cfg: net.NetworkConfig, X, t, prior: PriorSpec):
        X = np.asarray(X, dtype=float)
        self.cfg = cfg
        self.X = X
        self.t = net.check_targets(t)
        self.prior = prior
        self.alpha = np.ascontiguousarray(prior.per_weight, dtype=float)
        if self.alpha.shape != (cfg.n_weights,):
            raise InvalidInputError("prior group map does not match the network")
        self.n_weights = cfg.n_weights
        self._XT = np.ascontiguousarray(X.T)
        self.data_hash = data_hash(X, self.t)

    def energy(self, w):
        w = np.asarray(w, dtype=float)
        try:
            ed = net.data_error(self.cfg, w, self.X, self.t)
        except NetworkOverflowError:
            return np.inf
        return ed + 0.5 * float(self.alpha @ (w * w))

    def gradient(self, w):
        w = np.asarray(w, dtype=float)
        try:
            g = net.grad_data_error(self.cfg, w, self.X, self.t)
        except NetworkOverflowError as exc:
            raise TrajectoryDiverged(str(exc)) from exc
        return g + self.alpha * w

    def trajectory(self, w, p, g, eps, n_steps):
        w, p, g, U, ok = _kernels.trajectory(
            self._XT, self.t, self.alpha, np.ascontiguousarray(w, dtype=float),
            np.ascontiguousarray(p, dtype=float), np.ascontiguousarray(g, dtype=float),
            float(eps), int(n_steps), self.cfg.n_hidden, float(self.cfg.cap))
        if not ok:
            raise TrajectoryDiverged("network trajectory overflowed")
        return w, p, g, U


def _leapfrog(w, p, eps, n_steps, grad, g=None):
    w = np.array(w, dtype=float)
    p = np.array(p, dtype=float)
    g = grad(w) if g is None else np.array(g, dtype=float)
    p -= 0.5 * eps * g
    for step in range(n_steps):
        w += eps * p
        g = grad(w)
        if not np.all(np.isfinite(g)):
            raise TrajectoryDiverged("non-finite gradient mid-trajectory")
        if step < n_steps - 1:
            p -= eps * g
    p -= 0.5 * eps * g
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(w))):
        raise TrajectoryDiverged("non-finite state mid-trajectory")
    return w, p, g


def leapfrog(w, p, eps, n_steps, grad):
    """Leapfrog integration of ``dw = p, dp = -grad U``; returns ``(w', p')``.

    Raises
    ------
    TrajectoryDiverged
        If a gradient or the state becomes non-finite.
    """
    try:
        w, p, _ = _leapfrog(w, p, eps, n_steps, grad)
    except NetworkOverflowError as exc:
        raise TrajectoryDiverged(str(exc)) from exc
    return w, p


@dataclass
class StepResult:
    w: np.ndarray
    energy: float
    grad: np.ndarray
    accepted: bool
    h_old: float
    h_new: float


def hmc_step(w, energy, grad, potential: Potential, eps, n_steps, rng) -> StepResult:
    """One HMC transition from ``w`` (with cached energy and gradient).

    Momentum is drawn from N(0, I); the proposal is accepted with probability
    ``min(1, exp(H_old - H_new))``. A diverged trajectory counts as a reject.
    Exactly one normal vector and one uniform are consumed per call.
    """
    p = rng.standard_normal(potential.n_weights)
    u = rng.random()
    h_old = energy + 0.5 * float(p @ p)
    try:
        w_new, p_new, g_new, u_new = potential.trajectory(w, p, grad, eps, n_steps)
        h_new = u_new + 0.5 * float(p_new @ p_new)
    except (TrajectoryDiverged, NetworkOverflowError):
        h_new = np.inf
    if np.isfinite(h_new) and np.log(u) < h_old - h_new:
        return StepResult(w_new, u_new, g_new, True, h_old, h_new)
    return StepResult(w, energy, grad, False, h_old, h_new)


@dataclass
class Chain:
    """Retained samples plus the per-step log of one HMC run."""

    samples: np.ndarray            # (n_samples, W)
    energies: np.ndarray           # S(w) of each retained sample
    sample_accepted: np.ndarray    # accept flag of the step that produced each sample
    step_energy: np.ndarray        # S(w) after every step (burn-in included)
    step_hamiltonian: np.ndarray   # proposal Hamiltonian of every step
    step_accepted: np.ndarray
    step_size: np.ndarray          # step size used at every step
    n_burn: int
    seed: int
    alpha: np.ndarray | None = None
    data_hash: str = ""
    rng_state: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.step_accepted[self.n_burn:]))

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]


def run_chain(potential: Potential, w0, settings: HmcSettings = HmcSettings()) -> Chain:
    """Burn in (adapting the step size), then collect thinned samples."""
    w = np.array(w0, dtype=float)
    if w.shape != (potential.n_weights,):
        raise InvalidInputError(f"initial point must have length {potential.n_weights}")
    energy = potential.energy(w)
    if not np.isfinite(energy):
        raise ChainError("potential is not finite at the initial point")
    grad = potential.gradient(w)
    rng = np.random.default_rng(settings.seed)
    n_steps = settings.burn_in + settings.n_samples * settings.thin
    step_energy = np.empty(n_steps)
    step_ham = np.empty(n_steps)
    step_acc = np.zeros(n_steps, dtype=bool)
    step_eps = np.empty(n_steps)
    samples = np.empty((settings.n_samples, potential.n_weights))
    energies = np.empty(settings.n_samples)
    sample_acc = np.zeros(settings.n_samples, dtype=bool)
    eps = settings.step_size
    lo, hi = settings.target_accept
    block = 0
    k = 0
    for s in range(n_steps):
        res = hmc_step(w, energy, grad, potential, eps, settings.n_leapfrog, rng)
        w, energy, grad = res.w, res.energy, res.grad
        step_energy[s] = energy
        step_ham[s] = res.h_new
        step_acc[s] = res.accepted
        step_eps[s] = eps
        if s < settings.burn_in:
            block += res.accepted
            if (s + 1) % settings.adapt_every == 0:
                rate = block / settings.adapt_every
                if rate < lo:
                    eps *= 0.9
                elif rate > hi:
                    eps *= 1.1
                block = 0
        elif (s - settings.burn_in + 1) % settings.thin == 0:
            samples[k] = w
            energies[k] = energy
            sample_acc[k] = res.accepted
            k += 1
    chain = Chain(samples, energies, sample_acc, step_energy, step_ham, step_acc, step_eps,
                  settings.burn_in, settings.seed, rng_state=rng.bit_generator.state)
    if isinstance(potential, NetworkPotential):
        chain.alpha = potential.alpha.copy()
        chain.data_hash = potential.data_hash
    if chain.acceptance_rate < 0.05:
        msg = f"low acceptance rate {chain.acceptance_rate:.3f} in the retained phase"
        chain.warnings.append(msg)
        log.warning(msg)
    return chain


@dataclass
class PredictiveSummary:
    mean: np.ndarray               # (n_rows,)
    sd: np.ndarray                 # (n_rows,) sample sd of the rate across draws
    t_query: np.ndarray | None = None
    pmf: np.ndarray | None = None  # (n_rows, n_queries)
    pmf_se: np.ndarray | None = None
    n_draws: int = 0


def rate_draws(cfg: net.NetworkConfig, samples, X) -> np.ndarray:
    """Rates of every weight sample at every row: shape (n_samples, n_rows)."""
    return np.array([net.forward_batch(cfg, w, X) for w in samples]).reshape(len(samples), -1)


def predictive_summary(cfg: net.NetworkConfig, chains, X, t_query=None) -> PredictiveSummary:
    """Finite-sum predictive over all retained samples of ``chains``.

    ``mean`` and ``sd`` (N-1 denominator) summarize the rate; for each
    queried count ``pmf`` averages the Poisson pmf over samples and
    ``pmf_se = sqrt((<p^2> - <p>^2) / N)``.
    """
    if isinstance(chains, Chain):
        chains = [chains]
    arrays = [c.samples if isinstance(c, Chain) else np.atleast_2d(c) for c in chains]
    samples = np.concatenate(arrays, axis=0) if arrays else np.empty((0, cfg.n_weights))
    if samples.shape[0] == 0:
        raise ChainError("no retained samples to summarize")
    X = np.asarray(X, dtype=float)
    rates = rate_draws(cfg, samples, X)
    n = rates.shape[0]
    mean = rates.mean(axis=0)
    sd = rates.std(axis=0, ddof=1) if n > 1 else np.zeros(rates.shape[1])
    out = PredictiveSummary(mean, sd, n_draws=n)
    if t_query is not None:
        tq = np.atleast_1d(np.asarray(t_query))
        if np.any(tq < 0) or np.any(tq != np.round(tq)):
            raise InvalidInputError("query counts must be non-negative integers")
        p = stats.poisson.pmf(tq[None, None, :], rates[:, :, None])
        m1 = p.mean(axis=0)
        m2 = (p * p).mean(axis=0)
        out.t_query = tq
        out.pmf = m1
        out.pmf_se = np.sqrt(np.maximum(m2 - m1 * m1, 0.0) / n)
    return out


def write_chain_csv(chain: Chain, path, names=None):
    """One row per retained sample: weight columns, ``energy``, ``accepted``."""
    names = names or [f"w{i}" for i in range(chain.samples.shape[1])]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(list(names) + ["energy", "accepted"])
        for w, e, a in zip(chain.samples, chain.energies, chain.sample_accepted):
            wr.writerow([repr(float(v)) for v in w] + [repr(float(e)), int(a)])


def read_chain_csv(path):
    """Return ``(names, samples, energies, accepted)`` from :func:`write_chain_csv` output."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body]).reshape(len(body), len(header))
    return header[:-2], data[:, :-2], data[:, -2], data[:, -1].astype(bool)
