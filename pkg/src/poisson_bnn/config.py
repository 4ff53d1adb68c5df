"""Benchmark run configuration (JSON) with strict key checking.

A config is a JSON object; any key absent from :data:`DEFAULTS` is an
error, at every nesting level. :func:`resolve` expands the defaults so the
written ``resolved_config.json`` fully determines a rerun.
"""

from __future__ import annotations

import copy
import json
import os

from .errors import ConfigError
from .training import DEFAULT_ALPHA_GRID, DEFAULT_HIDDEN_GRID

MODEL_KINDS = ("glm", "ml", "hmc", "hybrid")

DEFAULTS = {
    "seed": 0,
    "out": "bench_out",
    "data": {
        "scheme": 1,           # simulation scheme 1-6; ignored when csv is set
        "n": 500,
        "csv": None,           # path to a headed CSV instead of simulating
        "target": "t",
        "rate_column": "true_rate",
    },
    "split": {"train_fraction": 0.8, "standardize": False},
    "models": list(MODEL_KINDS),
    "hidden": 5,
    "alpha": 0.075,
    "hybrid_prior": "ard",     # "ard" or "single"
    "cv": {
        "enabled": False,      # grid-search hidden/alpha for the ml committee
        "folds": 5,
        "alpha_grid": list(DEFAULT_ALPHA_GRID),
        "hidden_grid": list(DEFAULT_HIDDEN_GRID),
    },
    "train": {"max_iter": 500, "gtol": 1e-5, "ftol": 1e-9, "restarts": 10},
    "evidence": {"max_outer": 20, "alpha_tol": 1e-3, "eig_floor": 0.0},
    "hmc": {
        "step_size": 0.01,
        "n_leapfrog": 100,
        "burn_in": 5000,
        "n_samples": 5000,
        "thin": 1,
        "target_accept": [0.6, 0.9],
        "adapt_every": 20,
    },
    "chains": 5,
    "against": "rate",         # "rate" (true_rate column) or "count"
    "figures": True,
}


def _merge(defaults: dict, given: dict, where: str) -> dict:
    if not isinstance(given, dict):
        raise ConfigError(f"{where or 'config'} must be a JSON object")
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(unknown)}")
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if isinstance(defaults[key], dict):
            out[key] = _merge(defaults[key], value, f"{where}.{key}".lstrip("."))
        else:
            out[key] = value
    return out


def resolve(given: dict, base_dir: str | None = None) -> dict:
    """Validate ``given`` and expand every default.

    A relative ``data.csv`` path is made absolute against ``base_dir``.
    """
    cfg = _merge(DEFAULTS, given, "")
    models = cfg["models"]
    if not models or any(m not in MODEL_KINDS for m in models) or len(set(models)) != len(models):
        raise ConfigError(f"models must be distinct entries of {list(MODEL_KINDS)}")
    cfg["models"] = [m for m in MODEL_KINDS if m in models]
    if cfg["against"] not in ("rate", "count"):
        raise ConfigError("against must be 'rate' or 'count'")
    if cfg["hybrid_prior"] not in ("ard", "single"):
        raise ConfigError("hybrid_prior must be 'ard' or 'single'")
    for key in ("seed", "hidden", "chains"):
        if not isinstance(cfg[key], int) or isinstance(cfg[key], bool):
            raise ConfigError(f"{key} must be an integer")
    if cfg["chains"] < 1 or cfg["hidden"] < 1:
        raise ConfigError("hidden and chains must be >= 1")
    csv_path = cfg["data"]["csv"]
    if csv_path is not None:
        if base_dir and not os.path.isabs(csv_path):
            csv_path = os.path.join(base_dir, csv_path)
        cfg["data"]["csv"] = os.path.abspath(csv_path)
    return cfg


def load(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            given = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return resolve(given, os.path.dirname(os.path.abspath(path)))
