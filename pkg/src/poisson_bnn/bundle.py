"""On-disk model bundles: one directory per fitted model.

Every bundle holds ``model.json`` (kind, architecture, prior, settings,
split and scaling metadata). Depending on the kind it also holds
``glm.json``, ``members.csv``, ``chain_XX.csv``, ``evidence_log.csv``,
``ard_report.csv`` and ``predictive_summary.csv``. Floats are written in
``repr`` form, so a bundle written twice from the same fit is
byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import network as net
from .data import Standardizer
from .errors import InvalidInputError, NotApplicableError
from .glm import GlmFit, predict_glm
from .hmc import predictive_summary, read_chain_csv, write_chain_csv
from .hybrid import SampledModel, ard_report
from .objective import PriorSpec
from .training import CommitteeModel

BUNDLE_FORMAT = 1
KINDS = ("glm", "ml", "hmc", "hybrid")


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    return v


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def fmt_float(v) -> str:
    return repr(float(v))


def _prior_dict(prior: PriorSpec) -> dict:
    return {"mode": prior.mode, "alphas": prior.group_alphas, "group_names": list(prior.names)}


def _prior_from(d: dict, cfg) -> PriorSpec:
    alphas = np.asarray(d["alphas"], dtype=float)
    names = d["group_names"][:cfg.n_inputs] if d.get("group_names") else None
    if d["mode"] == "single":
        return PriorSpec.single(cfg, float(alphas[0]), names)
    return PriorSpec.ard(cfg, alphas, names)


def _weight_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)


def save_glm(directory, fit: GlmFit, meta: dict):
    os.makedirs(directory, exist_ok=True)
    glm = {"coef": fit.coef, "converged": fit.converged, "n_iter": fit.n_iter,
           "deviance": fit.deviance, "deviance_trace": fit.deviance_trace,
           "terms": ["intercept"] + list(meta.get("covariates", []))}
    write_json(os.path.join(directory, "glm.json"), glm)
    write_json(os.path.join(directory, "model.json"), dict(meta, kind="glm"))


def save_committee(directory, model: CommitteeModel, meta: dict):
    os.makedirs(directory, exist_ok=True)
    names = model.cfg.weight_names()
    rows = [[m.seed, int(m.converged), m.reason, fmt_float(m.objective)] + [fmt_float(v) for v in m.w]
            for m in model.members]
    _weight_rows(os.path.join(directory, "members.csv"),
                 ["seed", "converged", "reason", "objective"] + names, rows)
    info = dict(meta, kind="ml", prior=_prior_dict(model.prior),
                failures=[{"seed": s, "error": e} for s, e in model.failures])
    write_json(os.path.join(directory, "model.json"), info)


def save_sampled(directory, model: SampledModel, meta: dict, X_train=None, X_raw=None):
    """Chains, evidence log, relevance report and a training-row predictive summary.

    ``X_train`` is what the network saw (scaled if scaling is on); ``X_raw``
    supplies the covariate columns written next to the summary.
    """
    os.makedirs(directory, exist_ok=True)
    names = model.cfg.weight_names()
    chains = []
    for k, ch in enumerate(model.chains):
        fname = f"chain_{k:02d}.csv"
        write_chain_csv(ch, os.path.join(directory, fname), names)
        chains.append({"file": fname, "seed": ch.seed, "acceptance_rate": ch.acceptance_rate,
                       "final_step_size": float(ch.step_size[-1]), "alpha": ch.alpha,
                       "data_hash": ch.data_hash, "warnings": ch.warnings})
    info = dict(meta, kind=model.kind, prior=_prior_dict(model.prior), chains=chains,
                chain_failures=[{"chain": j, "error": e} for j, e in model.failures])
    if model.evidence is not None:
        ev = model.evidence
        info["evidence"] = {"converged": ev.converged, "iterations": len(ev.log),
                            "gammas": ev.gammas, "w_map": ev.w_map}
        _write_evidence_log(os.path.join(directory, "evidence_log.csv"), ev.log,
                            list(model.prior.names) or None)
    if model.prior.mode == "ard":
        _weight_rows(os.path.join(directory, "ard_report.csv"), ["covariate", "alpha", "rank"],
                     [[r.covariate, fmt_float(r.alpha), r.rank] for r in ard_report(model)])
    if X_train is not None:
        write_predictive_csv(os.path.join(directory, "predictive_summary.csv"),
                             model.summary(X_train), X_train if X_raw is None else X_raw,
                             meta.get("covariates"))
    write_json(os.path.join(directory, "model.json"), info)


def _write_evidence_log(path, history, group_names):
    if not history:
        return
    g = len(history[0]["alphas"])
    labels = group_names if group_names and len(group_names) == g else [f"g{i}" for i in range(g)]
    n_gam = len(history[0]["gammas"])
    gam_labels = labels if n_gam == g else ["all"]
    header = (["iteration", "objective", "data_error", "inner_iterations", "inner_converged",
               "rel_change"] + [f"alpha_{n}" for n in labels]
              + [f"gamma_{n}" for n in gam_labels] + [f"new_alpha_{n}" for n in labels])
    rows = []
    for h in history:
        rows.append([h["iteration"], fmt_float(h["objective"]), fmt_float(h["data_error"]),
                     h["inner_iterations"], int(h["inner_converged"]), fmt_float(h["rel_change"])]
                    + [fmt_float(v) for v in h["alphas"]] + [fmt_float(v) for v in h["gammas"]]
                    + [fmt_float(v) for v in h["new_alphas"]])
    _weight_rows(path, header, rows)


def write_predictive_csv(path, summary, X, covariates=None, actual=None):
    """Per-row mean rate with one-sd error-bar bounds, ready for plotting."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    covariates = list(covariates or [f"x{i + 1}" for i in range(X.shape[1])])
    header = ["row"] + covariates + (["actual"] if actual is not None else []) + \
        ["mean", "sd", "lower", "upper"]
    rows = []
    for i in range(X.shape[0]):
        m, s = summary.mean[i], summary.sd[i]
        rows.append([i] + [fmt_float(v) for v in X[i]]
                    + ([fmt_float(actual[i])] if actual is not None else [])
                    + [fmt_float(m), fmt_float(s), fmt_float(m - s), fmt_float(m + s)])
    _weight_rows(path, header, rows)


@dataclass
class LoadedModel:
    """A bundle read back from disk, able to predict on raw covariates."""

    directory: str
    meta: dict
    glm: GlmFit | None = None
    cfg: net.NetworkConfig | None = None
    prior: PriorSpec | None = None
    weights: list = field(default_factory=list)      # ml member weights
    chains: list = field(default_factory=list)       # (names, samples, energies, accepted)

    @property
    def kind(self) -> str:
        return self.meta["kind"]

    @property
    def name(self) -> str:
        return os.path.basename(os.path.normpath(self.directory))

    def _scale(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        sc = self.meta.get("standardizer")
        if sc:
            X = Standardizer(np.asarray(sc["mean"]), np.asarray(sc["scale"])).transform(X)
        return X

    def predict(self, X) -> np.ndarray:
        X = self._scale(X)
        if self.kind == "glm":
            return predict_glm(self.glm, X)
        if self.kind == "ml":
            return np.mean([net.forward_batch(self.cfg, w, X) for w in self.weights], axis=0)
        return self.summary(X, scaled=True).mean

    def summary(self, X, t_query=None, scaled=False):
        if self.kind not in ("hmc", "hybrid"):
            raise NotApplicableError(f"{self.kind} bundles hold no posterior samples")
        X = X if scaled else self._scale(X)
        return predictive_summary(self.cfg, [c[1] for c in self.chains], X, t_query)


def load_bundle(directory) -> LoadedModel:
    path = os.path.join(directory, "model.json")
    if not os.path.exists(path):
        raise InvalidInputError(f"{directory}: not a model bundle (no model.json)")
    with open(path, encoding="utf-8") as fh:
        meta = json.load(fh)
    kind = meta.get("kind")
    if kind not in KINDS:
        raise InvalidInputError(f"{directory}: unknown model kind {kind!r}")
    out = LoadedModel(str(directory), meta)
    if kind == "glm":
        with open(os.path.join(directory, "glm.json"), encoding="utf-8") as fh:
            g = json.load(fh)
        out.glm = GlmFit(np.asarray(g["coef"], dtype=float), g["converged"], g["n_iter"],
                         float(g["deviance"]), g["deviance_trace"])
        return out
    out.cfg = net.NetworkConfig(int(meta["n_inputs"]), int(meta["n_hidden"]))
    out.prior = _prior_from(meta["prior"], out.cfg)
    if kind == "ml":
        with open(os.path.join(directory, "members.csv"), newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))[1:]
        out.weights = [np.array([float(v) for v in r[4:]]) for r in rows]
    else:
        out.chains = [read_chain_csv(os.path.join(directory, c["file"])) for c in meta["chains"]]
    return out
