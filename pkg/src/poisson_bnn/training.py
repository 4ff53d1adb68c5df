"""Penalized maximum-likelihood training, cross-validation and committees."""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import network as net
from .errors import InvalidInputError, NetworkOverflowError, OptimizationError
from .objective import NetworkProblem, ObjectiveValue, PriorSpec, Problem, poisson_nll
from .seeds import derive_seed

DEFAULT_ALPHA_GRID = (0.01, 0.025, 0.05, 0.075, 0.1)
DEFAULT_HIDDEN_GRID = tuple(range(3, 14))
FTOL_PATIENCE = 5


@dataclass(frozen=True)
class TrainSettings:
    max_iter: int = 500
    gtol: float = 1e-5
    ftol: float = 1e-9
    restarts: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.gtol <= 0 or self.ftol <= 0:
            raise InvalidInputError("tolerances must be positive")
        if self.restarts < 1:
            raise InvalidInputError("restarts must be >= 1")
        if self.max_iter < 0:
            raise InvalidInputError("max_iter must be >= 0")


@dataclass(frozen=True)
class CvPlan:
    folds: int = 5
    alpha_grid: tuple = DEFAULT_ALPHA_GRID
    hidden_grid: tuple = DEFAULT_HIDDEN_GRID
    seed: int = 0

    def __post_init__(self):
        if self.folds < 2:
            raise InvalidInputError("folds must be >= 2")
        if not self.alpha_grid or not self.hidden_grid:
            raise InvalidInputError("grids must be non-empty")


@dataclass
class MinimizeResult:
    w: np.ndarray
    value: ObjectiveValue
    trace: list
    n_iter: int
    converged: bool
    reason: str
    grad_norm: float


def _safe_eval(problem, prior, w):
    try:
        f = problem.objective(w, prior).total
    except (NetworkOverflowError, FloatingPointError):
        return np.inf
    return f if np.isfinite(f) else np.inf


def minimize(problem: Problem, prior: PriorSpec, settings: TrainSettings = TrainSettings(),
             w0=None) -> MinimizeResult:
    """Quasi-Newton (BFGS) descent on ``S(w)`` with Armijo backtracking.

    Every accepted step satisfies sufficient decrease, so ``trace`` is
    non-increasing. Trial points whose output overflows count as infinite
    objective and are backtracked from.

    Stops when ``max|grad S| <= gtol`` (``reason='gtol'``), when
    ``FTOL_PATIENCE`` consecutive steps each decrease ``S`` by less than
    ``ftol`` (absolute, ``'ftol'``), when the
    line search cannot make progress (``'linesearch'``) or at ``max_iter``.
    """
    n = problem.n_weights
    w = np.zeros(n) if w0 is None else np.array(w0, dtype=float)
    if w.shape != (n,):
        raise InvalidInputError(f"w0 must have length {n}")
    f = _safe_eval(problem, prior, w)
    if not np.isfinite(f):
        raise OptimizationError("objective is not finite at the starting point", last_w=w)
    g = problem.objective_grad(w, prior)
    trace = [f]
    gnorm = float(np.max(np.abs(g))) if n else 0.0
    if gnorm <= settings.gtol:
        return MinimizeResult(w, problem.objective(w, prior), trace, 0, True, "gtol", gnorm)

    c1 = 1e-4
    Hinv = np.eye(n)
    scaled = False
    reason = "max_iter"
    converged = False
    stalled = 0
    it = 0
    while it < settings.max_iter:
        it += 1
        d = -Hinv @ g
        slope = float(g @ d)
        if not slope < 0:
            Hinv = np.eye(n)
            d = -g
            slope = float(g @ d)
        step = 1.0
        while True:
            w_new = w + step * d
            f_new = _safe_eval(problem, prior, w_new)
            if f_new <= f + c1 * step * slope:
                break
            step *= 0.5
            if step < 1e-20:
                f_new = None
                break
        if f_new is None:
            reason = "linesearch"
            it -= 1
            break
        g_new = problem.objective_grad(w_new, prior)
        if not np.all(np.isfinite(g_new)):
            raise OptimizationError("gradient became non-finite", last_w=w)
        s = w_new - w
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * float(np.sqrt((s @ s) * (y @ y))):
            if not scaled:
                Hinv = np.eye(n) * (sy / float(y @ y))
                scaled = True
            rho = 1.0 / sy
            Hy = Hinv @ y
            Hinv = (Hinv - rho * (np.outer(s, Hy) + np.outer(Hy, s))
                    + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s))
        decrease = f - f_new
        w, f, g = w_new, f_new, g_new
        trace.append(f)
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= settings.gtol:
            reason, converged = "gtol", True
            break
        stalled = stalled + 1 if decrease < settings.ftol else 0
        if stalled >= FTOL_PATIENCE:
            reason = "ftol"
            break
    return MinimizeResult(w, problem.objective(w, prior), trace, it, converged, reason, gnorm)


def fold_assignment(n: int, folds: int, seed: int) -> np.ndarray:
    """Fold id per row: a seeded permutation cut into near-equal parts."""
    perm = np.random.default_rng(derive_seed(seed, "folds")).permutation(n)
    fold = np.empty(n, dtype=np.intp)
    for k, idx in enumerate(np.array_split(perm, folds)):
        fold[idx] = k
    return fold


@dataclass
class CvResult:
    best_alpha: float
    best_hidden: int
    table: list  # rows of (hidden, alpha, mean held-out NLL per observation)


def cross_validate(X, t, plan: CvPlan = CvPlan(), settings: TrainSettings = TrainSettings(),
                   prior_mode: str = "single") -> CvResult:
    """K-fold grid search over hidden-unit counts and alpha.

    Each cell is scored by the held-out Poisson NLL per observation averaged
    over folds. Ties go to the smaller hidden count, then the smaller alpha.
    Every (cell, fold) fit uses its own derived seed, so the table does not
    depend on evaluation order.
    """
    X = np.asarray(X, dtype=float)
    t = net.check_targets(t)
    n = X.shape[0]
    if n < plan.folds:
        raise InvalidInputError(f"need at least {plan.folds} rows for {plan.folds}-fold CV")
    fold = fold_assignment(n, plan.folds, plan.seed)
    for k in range(plan.folds):
        tr = fold != k
        if X.shape[1] and np.any(np.var(X[tr], axis=0) == 0):
            warnings.warn(f"fold {k}: a covariate has zero variance in the training part",
                          RuntimeWarning, stacklevel=2)
    table = []
    for m, alpha in itertools.product(sorted(set(plan.hidden_grid)), sorted(set(plan.alpha_grid))):
        cfg = net.NetworkConfig(X.shape[1], int(m))
        scores = []
        for k in range(plan.folds):
            tr, te = fold != k, fold == k
            prior = (PriorSpec.single(cfg, alpha) if prior_mode == "single"
                     else PriorSpec.ard(cfg, alpha))
            rng = np.random.default_rng(derive_seed(plan.seed, "cv", m, repr(float(alpha)), k))
            res = minimize(NetworkProblem(cfg, X[tr], t[tr]), prior, settings,
                           net.init_weights(cfg, rng))
            rates = net.forward_batch(cfg, res.w, X[te])
            scores.append(poisson_nll(rates, t[te]) / te.sum())
        table.append((int(m), float(alpha), float(np.mean(scores))))
    best = min(table, key=lambda r: (r[2], r[0], r[1]))
    return CvResult(best[1], best[0], table)


@dataclass
class Member:
    seed: int
    w: np.ndarray
    converged: bool
    reason: str
    objective: float


@dataclass
class CommitteeModel:
    cfg: net.NetworkConfig
    prior: PriorSpec
    members: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def member_rates(self, X) -> np.ndarray:
        return np.array([net.forward_batch(self.cfg, m.w, X) for m in self.members])

    def predict(self, X) -> np.ndarray:
        """Arithmetic mean of the member rates, row by row."""
        return self.member_rates(X).mean(axis=0)


def train_committee(cfg: net.NetworkConfig, X, t, prior: PriorSpec,
                    settings: TrainSettings = TrainSettings()) -> CommitteeModel:
    """Train ``settings.restarts`` networks from independent random starts.

    Members that stop without meeting the gradient tolerance are kept and
    flagged; members whose optimization raises are recorded in
    ``failures``. Raises :class:`OptimizationError` if no member survives.
    """
    problem = NetworkProblem(cfg, X, t)
    model = CommitteeModel(cfg, prior)
    for r in range(settings.restarts):
        seed = derive_seed(settings.seed, "restart", r)
        w0 = net.init_weights(cfg, np.random.default_rng(seed))
        try:
            res = minimize(problem, prior, settings, w0)
        except OptimizationError as exc:
            model.failures.append((seed, str(exc)))
            continue
        model.members.append(Member(seed, res.w, res.converged, res.reason, res.value.total))
    if not model.members:
        raise OptimizationError("every committee member failed", partial=model)
    return model
