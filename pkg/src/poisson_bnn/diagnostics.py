"""Gelman-Rubin potential scale reduction and prediction error metrics."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateStatisticError, InvalidInputError

EPSR_CUTOFF = 1.10

PERMUTATION_CAVEAT = (
    "EPSR on raw weights is not invariant to hidden-unit permutations or sign flips; "
    "chains sitting in symmetric modes inflate it even when the fit is equivalent."
)


def epsr(chains) -> float:
    """Estimated potential scale reduction of one scalar statistic.

    ``chains`` has shape (m, n). With ``W`` the mean within-chain variance
    and ``B`` n times the variance of the chain means,
    ``V = (n-1)/n W + B/n`` and the result is ``sqrt(V / W)``.
    Returns ``inf`` when every chain is constant but the chains differ.
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2:
        raise InvalidInputError("chains must be a 2-D array (m chains x n draws)")
    m, n = x.shape
    if m < 2 or n < 2:
        raise InvalidInputError("need at least 2 chains of length >= 2")
    means = x.mean(axis=1)
    W = x.var(axis=1, ddof=1).mean()
    B = n * means.var(ddof=1)
    if W == 0:
        if B == 0:
            raise DegenerateStatisticError("all chains are constant and equal")
        return math.inf
    V = (n - 1) / n * W + B / n
    return float(np.sqrt(V / W))


@dataclass
class EpsrReport:
    names: list
    values: np.ndarray
    m: int
    n: int
    traces: np.ndarray = field(repr=False, default=None)  # (m, n) objective traces

    @property
    def passed(self) -> np.ndarray:
        return self.values < EPSR_CUTOFF

    @property
    def pass_fraction(self) -> float:
        return float(np.mean(self.passed))

    @property
    def worst(self):
        i = int(np.argmax(self.values))
        return self.names[i], float(self.values[i])

    def summary(self) -> dict:
        name, value = self.worst
        return {
            "pass_fraction": self.pass_fraction,
            "worst_statistic": {"name": name, "epsr": _json_float(value)},
            "cutoff": EPSR_CUTOFF,
            "n_chains": self.m,
            "chain_length": self.n,
            "caveat": PERMUTATION_CAVEAT,
        }

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["statistic", "epsr", "pass"])
            for name, v, ok in zip(self.names, self.values, self.passed):
                wr.writerow([name, _fmt(v), int(ok)])

    def write_summary(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_traces(self, path):
        """Objective value per retained sample, one column per chain."""
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["sample"] + [f"chain_{k}" for k in range(self.m)])
            for i in range(self.n):
                wr.writerow([i] + [repr(float(v)) for v in self.traces[:, i]])


def _json_float(v):
    return v if math.isfinite(v) else str(v)


def _fmt(v):
    return repr(float(v)) if math.isfinite(v) else ("inf" if v > 0 else "nan")


def _epsr_or_nan(x):
    try:
        return epsr(x)
    except DegenerateStatisticError:
        return math.nan


def epsr_report(samples, objective_traces, names=None) -> EpsrReport:
    """EPSR for every weight index plus the regularized error.

    Parameters
    ----------
    samples : sequence of (n, W) arrays, one per chain
    objective_traces : sequence of (n,) arrays with S(w) per retained sample
    names : weight names; defaults to ``w0..w{W-1}``
    """
    samples = [np.asarray(s, dtype=float) for s in samples]
    traces = [np.asarray(e, dtype=float) for e in objective_traces]
    shapes = {s.shape for s in samples}
    if len(shapes) != 1:
        raise InvalidInputError(f"chains differ in shape: {sorted(shapes)}")
    m = len(samples)
    n, W = samples[0].shape
    if len(traces) != m or any(e.shape != (n,) for e in traces):
        raise InvalidInputError("objective traces must match the chains")
    traces = np.stack(traces)
    names = list(names) if names is not None else [f"w{i}" for i in range(W)]
    stack = np.stack(samples)  # (m, n, W)
    values = [_epsr_or_nan(stack[:, :, i]) for i in range(W)]
    values.append(_epsr_or_nan(traces))
    return EpsrReport(names + ["Error"], np.array(values), m, n, traces)


@dataclass
class EvalRow:
    rmse: float
    mae: float
    mpe: float   # nan when some actual value is 0
    rse: float   # nan when the actual values have zero variance

    def as_tuple(self):
        return (self.rmse, self.mae, self.mpe, self.rse)


METRIC_COLUMNS = ("RMSE", "MAE", "MPE", "RSE")


def metrics(actual, predicted) -> EvalRow:
    """RMSE, MAE, mean absolute percentage error and relative squared error.

    MPE is ``mean(|a - p| / a)``; RSE compares the squared error with that of
    predicting ``mean(a)`` everywhere.
    """
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if a.shape != p.shape or a.ndim != 1 or a.size == 0:
        raise InvalidInputError("actual and predicted must be equal-length non-empty vectors")
    err = a - p
    rmse = float(np.sqrt(np.mean(err * err)))
    mae = float(np.mean(np.abs(err)))
    mpe = float(np.mean(np.abs(err) / a)) if np.all(a > 0) else math.nan
    ss = float(np.sum((a - a.mean()) ** 2))
    rse = float(np.sum(err * err) / ss) if ss > 0 else math.nan
    return EvalRow(rmse, mae, mpe, rse)
