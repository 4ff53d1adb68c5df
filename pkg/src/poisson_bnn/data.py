"""Simulated count datasets, CSV ingestion and train/test splitting."""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDatasetError, InvalidInputError, ParseError


def _rate1(x):
    return np.exp(x[:, 0])


def _rate2(x):
    return np.exp(1.0 + 1.5 * np.exp(x[:, 0] + 0.2))


def _rate3(x):
    return np.exp(1.0 + 1.2 * x[:, 0] ** 0.5 + 0.25 * x[:, 1] ** 0.25)


def _rate4(x):
    return np.exp(0.5 * np.exp(1.0 + 2.0 * x[:, 0]) / (1.0 + np.exp(x[:, 1] + 1.0)))


def _rate5(x):
    return np.exp((0.5 * x[:, 0] ** 2 + x[:, 1] ** 2) / (1.0 + 0.2 * np.exp(x[:, 2] + 0.2)))


def _rate6(x):
    return np.exp(1.0 + 1.25 * np.log(x[:, 0]) + 0.5 * x[:, 1] + 0.25 * x[:, 2] ** 2)


@dataclass(frozen=True)
class SimScheme:
    id: int
    bounds: tuple  # (low, high) per covariate, drawn uniformly
    rate: object

    @property
    def n_inputs(self) -> int:
        return len(self.bounds)


SCHEMES = {
    1: SimScheme(1, ((0.0, 1.0),), _rate1),
    2: SimScheme(2, ((0.0, 1.0),), _rate2),
    3: SimScheme(3, ((0.0, 1.0), (0.0, 2.0)), _rate3),
    4: SimScheme(4, ((0.0, 1.0), (0.0, 1.0)), _rate4),
    5: SimScheme(5, ((0.0, 1.0), (1.0, 2.0), (0.0, 1.0)), _rate5),
    6: SimScheme(6, ((1.0, 4.0), (0.0, 1.0), (0.0, 0.2)), _rate6),
}


def scheme_rate(scheme: int, X) -> np.ndarray:
    """True rate of simulation ``scheme`` at covariate rows ``X``."""
    return get_scheme(scheme).rate(np.atleast_2d(np.asarray(X, dtype=float)))


def get_scheme(scheme) -> SimScheme:
    try:
        return SCHEMES[int(scheme)]
    except (KeyError, ValueError, TypeError):
        raise InvalidInputError(f"unknown simulation scheme {scheme!r}; expected 1-6") from None


@dataclass
class Dataset:
    X: np.ndarray
    t: np.ndarray
    rate: np.ndarray | None = None
    names: list = field(default_factory=list)
    target: str = "t"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2:
            raise InvalidInputError("X must be 2-D")
        self.t = np.asarray(self.t)
        if self.t.shape != (self.X.shape[0],):
            raise InvalidInputError("X and t disagree on the number of rows")
        if self.t.size and (np.any(self.t < 0) or np.any(self.t != np.round(self.t))):
            raise InvalidInputError("targets must be non-negative integers")
        self.t = self.t.astype(np.int64)
        if self.rate is not None:
            self.rate = np.asarray(self.rate, dtype=float)
            if self.rate.shape != self.t.shape or np.any(~(self.rate > 0)):
                raise InvalidInputError("true rates must be positive, one per row")
        if not self.names:
            self.names = [f"x{i + 1}" for i in range(self.X.shape[1])]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.t[idx], None if self.rate is None else self.rate[idx],
                       list(self.names), self.target, dict(self.provenance))

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        same_rate = ((self.rate is None and other.rate is None)
                     or (self.rate is not None and other.rate is not None
                         and np.array_equal(self.rate, other.rate)))
        return (np.array_equal(self.X, other.X) and np.array_equal(self.t, other.t)
                and same_rate and list(self.names) == list(other.names)
                and self.target == other.target)


def poisson_draw(lam: float, rng: np.random.Generator) -> int:
    """A single exact Poisson(``lam``) variate."""
    if not (np.isfinite(lam) and lam > 0):
        raise InvalidInputError(f"Poisson rate must be positive and finite, got {lam}")
    return int(rng.poisson(lam))


def simulate(scheme, n: int, seed: int) -> Dataset:
    """Draw ``n`` rows: uniform covariates, true rate, Poisson counts."""
    sch = get_scheme(scheme)
    if int(n) != n or n < 1:
        raise InvalidInputError("n must be a positive integer")
    rng = np.random.default_rng(seed)
    X = np.column_stack([rng.uniform(lo, hi, size=int(n)) for lo, hi in sch.bounds])
    rate = sch.rate(X)
    t = rng.poisson(rate)
    return Dataset(X, t, rate, provenance={"scheme": sch.id, "seed": int(seed)})


def write_csv(ds: Dataset, path, rate_column: str = "true_rate"):
    """Covariates, target, then the optional true-rate column; floats in repr form."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        header = list(ds.names) + [ds.target]
        if ds.rate is not None:
            header.append(rate_column)
        wr.writerow(header)
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.X[i]] + [str(int(ds.t[i]))]
            if ds.rate is not None:
                row.append(repr(float(ds.rate[i])))
            wr.writerow(row)


def _file_hash(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def load_csv(path, target: str, rate_column: str | None = None) -> Dataset:
    """Read a headed CSV; every other column becomes a covariate in header order."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh)]
    if not rows:
        raise EmptyDatasetError(f"{path}: no header row")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if any(c.strip() for c in r)]
    if target not in header:
        raise ParseError(f"{path}: target column {target!r} not in header {header}")
    if rate_column is not None and rate_column not in header:
        raise ParseError(f"{path}: rate column {rate_column!r} not in header")
    if not body:
        raise EmptyDatasetError(f"{path}: no data rows")
    ti = header.index(target)
    ri = header.index(rate_column) if rate_column is not None else None
    cov = [j for j in range(len(header)) if j not in (ti, ri)]
    X = np.empty((len(body), len(cov)))
    t = np.empty(len(body), dtype=np.int64)
    rate = np.empty(len(body)) if ri is not None else None
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise ParseError(f"{path}: data row {i} has {len(r)} fields, expected {len(header)}")
        for k, j in enumerate(cov):
            X[i, k] = _parse_float(r[j], i, header[j], path)
        tv = _parse_float(r[ti], i, target, path)
        if tv < 0 or tv != math.floor(tv):
            raise ParseError(f"{path}: row {i}: target {r[ti]!r} is not a non-negative integer")
        t[i] = int(tv)
        if ri is not None:
            rate[i] = _parse_float(r[ri], i, rate_column, path)
    return Dataset(X, t, rate, [header[j] for j in cov], target,
                   {"source": str(path), "sha256": _file_hash(path)})


def _parse_float(text, row, col, path):
    text = text.strip()
    if text == "" or text.upper() in ("NA", "NAN", "NULL"):
        raise ParseError(f"{path}: row {row}: missing value in column {col!r}")
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"{path}: row {row}: cannot parse {text!r} in column {col!r}") from None
    if not math.isfinite(v):
        raise ParseError(f"{path}: row {row}: non-finite value in column {col!r}")
    return v


def split(ds: Dataset, train_fraction: float = 0.8, seed: int = 0):
    """Seeded permutation; the first ``ceil(fraction * N)`` rows train."""
    if not 0 < train_fraction < 1:
        raise InvalidInputError("train_fraction must lie in (0, 1)")
    if ds.n < 2:
        raise InvalidInputError("need at least two rows to split")
    perm = np.random.default_rng(seed).permutation(ds.n)
    n_train = min(math.ceil(train_fraction * ds.n), ds.n - 1)
    return ds.subset(np.sort(perm[:n_train])), ds.subset(np.sort(perm[n_train:]))


@dataclass
class Standardizer:
    """Z-scoring with statistics from the training rows only."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X):
        X = np.asarray(X, dtype=float)
        sd = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(sd > 0, sd, 1.0))

    @classmethod
    def identity(cls, d):
        return cls(np.zeros(d), np.ones(d))

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.scale
