"""``poisson-bnn`` command line: simulate, fit, evaluate, diagnose, bench.

Seeds: every stage draws from ``derive_seed(run_seed, <stage>)``. The data
uses ``"simulate"``, the split ``"split"``, a model ``("fit", kind)`` and CV
``"cv"``. ``fit --seed S`` on a bench's ``data.csv`` therefore rebuilds the
bench's bundle for that model.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import bundle as bd
from . import config as rc
from .data import Dataset, Standardizer, load_csv, simulate, split, write_csv
from .diagnostics import METRIC_COLUMNS, epsr_report, metrics
from .errors import PoissonBnnError
from .evidence import EvidenceSettings
from .glm import fit_glm, predict_glm
from .hmc import HmcSettings
from .hybrid import fit_hmc, fit_hybrid
from .network import NetworkConfig
from .objective import PriorSpec, poisson_nll
from .seeds import derive_seed
from .training import CvPlan, TrainSettings, cross_validate, train_committee

log = logging.getLogger("poisson_bnn")


class StageError(PoissonBnnError):
    def __init__(self, stage, message):
        super().__init__(f"stage {stage!r} failed: {message}")
        self.stage = stage


@dataclass
class FitSpec:
    """Everything a single model fit needs besides the data."""

    kind: str
    hidden: int = 5
    alpha: float = 0.075
    prior: str | None = None          # defaults: "ard" for hybrid, "single" otherwise
    chains: int = 1
    seed: int = 0
    train_fraction: float = 0.8
    standardize: bool = False
    train: TrainSettings = field(default_factory=TrainSettings)
    evidence: EvidenceSettings = field(default_factory=EvidenceSettings)
    hmc: HmcSettings = field(default_factory=HmcSettings)
    cv: CvPlan | None = None

    @property
    def prior_mode(self) -> str:
        return self.prior or ("ard" if self.kind == "hybrid" else "single")

    def settings_dict(self) -> dict:
        out = {"seed": self.seed, "train_fraction": self.train_fraction,
               "standardize": self.standardize}
        if self.kind == "glm":
            return out
        out.update(hidden=self.hidden, alpha=self.alpha, prior=self.prior_mode,
                   chains=self.chains)
        if self.kind == "ml":
            out["train"] = vars(self.train)
            if self.cv is not None:
                out["cv"] = vars(self.cv)
        if self.kind == "hybrid":
            ev = dict(vars(self.evidence))
            ev["train"] = vars(self.evidence.train)
            out["evidence"] = ev
        if self.kind in ("hmc", "hybrid"):
            out["hmc"] = {k: v for k, v in vars(self.hmc).items() if k != "seed"}
        return out


@dataclass
class FitOutcome:
    ok: bool
    message: str
    train_nll: float
    directory: str


def _load_dataset(path, target, rate_column="true_rate") -> Dataset:
    """Load a CSV; ``rate_column`` is used only if the header has it."""
    with open(path, newline="", encoding="utf-8") as fh:
        header = [h.strip() for h in next(csv.reader(fh), [])]
    return load_csv(path, target, rate_column if rate_column in header else None)


def _split(ds: Dataset, fraction: float, seed: int):
    split_seed = derive_seed(seed, "split")
    return split(ds, fraction, split_seed), split_seed


def fit_to_bundle(ds: Dataset, spec: FitSpec, out_dir) -> FitOutcome:
    """Split ``ds``, fit ``spec.kind`` on the training part, write the bundle.

    A non-converged GLM does not raise: the bundle is still written and the
    outcome carries ``ok=False`` with the reason. Softer trouble (evidence
    loop at its cap, dropped committee members or chains, low acceptance)
    is recorded under ``status.warnings`` in ``model.json``.
    """
    (train, _), split_seed = _split(ds, spec.train_fraction, spec.seed)
    scaler = Standardizer.fit(train.X) if spec.standardize else None
    X = scaler.transform(train.X) if scaler else train.X
    t = train.t
    model_seed = derive_seed(spec.seed, "fit", spec.kind)
    meta = {
        "format": bd.BUNDLE_FORMAT, "n_inputs": ds.d, "n_hidden": spec.hidden,
        "covariates": list(ds.names), "target": ds.target,
        "split": {"train_fraction": spec.train_fraction, "seed": split_seed},
        "standardizer": ({"mean": scaler.mean, "scale": scaler.scale} if scaler else None),
        "data": {"sha256": ds.provenance.get("sha256"), "n_rows": ds.n, "n_train": train.n},
        "settings": spec.settings_dict(),
    }
    problems, notes = [], []
    if spec.kind == "glm":
        fit = fit_glm(X, t)
        nll = poisson_nll(predict_glm(fit, X), t)
        if not fit.converged:
            problems.append(f"IRLS did not converge in {fit.n_iter} iterations")
        meta.pop("n_hidden")
        bd.save_glm(out_dir, fit, _status(meta, problems, notes, nll))
    elif spec.kind == "ml":
        hidden, alpha = spec.hidden, spec.alpha
        if spec.cv is not None:
            cvr = cross_validate(X, t, spec.cv, spec.train)
            hidden, alpha = cvr.best_hidden, cvr.best_alpha
            meta["cv_table"] = [{"hidden": m, "alpha": a, "score": s} for m, a, s in cvr.table]
            meta["n_hidden"] = hidden
        cfg = NetworkConfig(ds.d, hidden)
        prior = _prior(cfg, spec.prior_mode, alpha, ds.names)
        settings = TrainSettings(spec.train.max_iter, spec.train.gtol, spec.train.ftol,
                                 spec.train.restarts, model_seed)
        model = train_committee(cfg, X, t, prior, settings)
        nll = poisson_nll(model.predict(X), t)
        if model.failures:
            notes.append(f"{len(model.failures)} committee member(s) failed")
        bd.save_committee(out_dir, model, _status(meta, problems, notes, nll))
    elif spec.kind in ("hmc", "hybrid"):
        cfg = NetworkConfig(ds.d, spec.hidden)
        prior = _prior(cfg, spec.prior_mode, spec.alpha, ds.names)
        if spec.kind == "hybrid":
            model = fit_hybrid(cfg, X, t, prior, spec.evidence, spec.hmc, spec.chains,
                               model_seed, ds.names)
            if not model.evidence.converged:
                notes.append(f"evidence procedure hit its cap of "
                                f"{spec.evidence.max_outer} outer iterations")
        else:
            model = fit_hmc(cfg, X, t, prior, spec.hmc, spec.chains, model_seed, ds.names)
        if model.failures:
            notes.append(f"{len(model.failures)} chain(s) failed")
        notes.extend(w for ch in model.chains for w in ch.warnings)
        nll = poisson_nll(model.predict(X), t)
        bd.save_sampled(out_dir, model, _status(meta, problems, notes, nll), X, train.X)
    else:
        raise PoissonBnnError(f"unknown model kind {spec.kind!r}")
    return FitOutcome(not problems, "; ".join(problems), nll, str(out_dir))


def _prior(cfg, mode, alpha, names):
    if mode == "ard":
        return PriorSpec.ard(cfg, alpha, names)
    return PriorSpec.single(cfg, alpha, names)


def _status(meta, problems, notes, nll):
    return dict(meta, status={"ok": not problems, "problems": problems, "warnings": notes},
                train_nll=nll)


def _test_rows(models, ds: Dataset, which: str) -> Dataset:
    if which == "all":
        return ds
    splits = {json.dumps(m.meta["split"], sort_keys=True) for m in models}
    if len(splits) != 1:
        raise PoissonBnnError("bundles were fitted on different splits; evaluate them separately")
    for m in models:
        recorded = m.meta.get("data", {}).get("sha256")
        if recorded and recorded != ds.provenance.get("sha256"):
            raise PoissonBnnError(f"{m.directory}: fitted on a different data file "
                                  "(use --rows all to score a separate test file)")
    sp = models[0].meta["split"]
    return split(ds, sp["train_fraction"], sp["seed"])[1]


def evaluate_models(models, test: Dataset, against: str, out_path, predictions_dir=None,
                    figures_dir=None):
    """Score each model on ``test`` and write the metric table.

    With ``predictions_dir`` set, sampled models also get a per-row
    predictive summary (mean, sd, one-sd bounds) there.
    """
    if against == "rate":
        if test.rate is None:
            raise PoissonBnnError("--against rate needs a true_rate column in the data")
        actual = test.rate
    else:
        actual = test.t.astype(float)
    rows = []
    for m in models:
        pred = m.predict(test.X)
        rows.append([m.name] + [bd.fmt_float(v) for v in metrics(actual, pred).as_tuple()])
        if predictions_dir and m.kind in ("hmc", "hybrid"):
            os.makedirs(predictions_dir, exist_ok=True)
            summ = m.summary(test.X)
            bd.write_predictive_csv(os.path.join(predictions_dir, f"{m.name}.csv"), summ,
                                    test.X, test.names, actual)
            if figures_dir:
                from .plotting import plot_predictions
                os.makedirs(figures_dir, exist_ok=True)
                plot_predictions(test.X[:, 0], summ.mean, summ.sd,
                                 os.path.join(figures_dir, f"predictions_{m.name}.png"),
                                 actual=actual, xlabel=test.names[0],
                                 title=f"{m.name}: test rows, mean +/- 1 sd")
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["model", *METRIC_COLUMNS])
        wr.writerows(rows)
    return rows


def diagnose_bundle(model: bd.LoadedModel, out_dir, figure=True):
    if model.kind not in ("hmc", "hybrid"):
        raise PoissonBnnError(f"{model.directory}: {model.kind} bundles have no chains")
    if len(model.chains) < 2:
        raise PoissonBnnError(f"{model.directory}: EPSR needs at least two chains; "
                              "refit with --chains 2 or more")
    names = model.chains[0][0]
    report = epsr_report([c[1] for c in model.chains], [c[2] for c in model.chains], names)
    os.makedirs(out_dir, exist_ok=True)
    report.write_csv(os.path.join(out_dir, "epsr.csv"))
    report.write_summary(os.path.join(out_dir, "epsr_summary.json"))
    report.write_traces(os.path.join(out_dir, "s_traces.csv"))
    if figure:
        from .plotting import plot_traces
        plot_traces(report.traces, os.path.join(out_dir, "s_traces.png"),
                    title=f"{model.name}: S(w) per chain")
    return report


# -- commands -------------------------------------------------------------


def cmd_simulate(args) -> int:
    ds = simulate(args.scheme, args.n, args.seed)
    write_csv(ds, args.out)
    print(f"wrote {args.out}: N={ds.n} d={ds.d} mean_rate={float(np.mean(ds.rate)):.6g}")
    return 0


def _spec_from_args(args) -> FitSpec:
    hmc = HmcSettings(step_size=args.step_size, n_leapfrog=args.leapfrog, burn_in=args.burn_in,
                      n_samples=args.samples, thin=args.thin)
    train = TrainSettings(max_iter=args.max_iter, restarts=args.restarts)
    cv = CvPlan(folds=args.folds) if args.cv else None
    return FitSpec(args.model, args.hidden, args.alpha, args.prior, args.chains, args.seed,
                   args.train_fraction, args.standardize, train,
                   EvidenceSettings(max_outer=args.max_outer, train=train), hmc, cv)


def cmd_fit(args) -> int:
    ds = _load_dataset(args.data, args.target)
    outcome = fit_to_bundle(ds, _spec_from_args(args), args.out)
    print(f"{args.model}: train NLL {outcome.train_nll:.6f} -> {args.out}")
    if not outcome.ok:
        print(f"error: {outcome.message} (artifacts kept in {args.out})", file=sys.stderr)
        return 1
    return 0


def cmd_evaluate(args) -> int:
    models = [bd.load_bundle(p) for p in args.models]
    target = args.target or models[0].meta.get("target", "t")
    ds = _load_dataset(args.data, target)
    test = _test_rows(models, ds, args.rows)
    rows = evaluate_models(models, test, args.against, args.out)
    _print_table(rows)
    return 0


def cmd_diagnose(args) -> int:
    report = diagnose_bundle(bd.load_bundle(args.model_bundle), args.out, not args.no_figure)
    name, value = report.worst
    print(f"pass fraction {report.pass_fraction:.3f}; worst {name} EPSR {value:.4f}")
    return 0


def _print_table(rows):
    print("model," + ",".join(METRIC_COLUMNS))
    for r in rows:
        print(",".join(r))


def _spec_from_config(cfg: dict, kind: str) -> FitSpec:
    tr = cfg["train"]
    train = TrainSettings(tr["max_iter"], tr["gtol"], tr["ftol"], tr["restarts"])
    ev = cfg["evidence"]
    evidence = EvidenceSettings(ev["max_outer"], ev["alpha_tol"], ev["eig_floor"], train)
    h = cfg["hmc"]
    hmc = HmcSettings(h["step_size"], h["n_leapfrog"], h["burn_in"], h["n_samples"], h["thin"],
                      tuple(h["target_accept"]), h["adapt_every"])
    cv = None
    if kind == "ml" and cfg["cv"]["enabled"]:
        c = cfg["cv"]
        cv = CvPlan(c["folds"], tuple(c["alpha_grid"]), tuple(c["hidden_grid"]),
                    derive_seed(cfg["seed"], "cv"))
    return FitSpec(kind, cfg["hidden"], cfg["alpha"],
                   cfg["hybrid_prior"] if kind == "hybrid" else "single", cfg["chains"],
                   cfg["seed"], cfg["split"]["train_fraction"], cfg["split"]["standardize"],
                   train, evidence, hmc, cv)


def run_bench(cfg: dict, out_dir) -> list:
    """Full pipeline for a resolved config; raises :class:`StageError`."""
    os.makedirs(out_dir, exist_ok=True)
    bd.write_json(os.path.join(out_dir, "resolved_config.json"), cfg)
    data_path = os.path.join(out_dir, "data.csv")
    stage = "load" if cfg["data"]["csv"] else "simulate"
    try:
        if cfg["data"]["csv"]:
            src = _load_dataset(cfg["data"]["csv"], cfg["data"]["target"],
                                cfg["data"]["rate_column"])
            write_csv(src, data_path, cfg["data"]["rate_column"])
        else:
            sim = simulate(cfg["data"]["scheme"], cfg["data"]["n"],
                           derive_seed(cfg["seed"], "simulate"))
            write_csv(sim, data_path)
        ds = _load_dataset(data_path, cfg["data"]["target"], cfg["data"]["rate_column"])
        stage = "split"
        train, test = _split(ds, cfg["split"]["train_fraction"], cfg["seed"])[0]
        write_csv(train, os.path.join(out_dir, "train.csv"), cfg["data"]["rate_column"])
        write_csv(test, os.path.join(out_dir, "test.csv"), cfg["data"]["rate_column"])
    except (PoissonBnnError, OSError) as exc:
        raise StageError(stage, exc) from exc

    models = []
    for kind in cfg["models"]:
        stage = f"fit:{kind}"
        mdir = os.path.join(out_dir, "models", kind)
        try:
            outcome = fit_to_bundle(ds, _spec_from_config(cfg, kind), mdir)
        except PoissonBnnError as exc:
            raise StageError(stage, exc) from exc
        print(f"[{stage}] train NLL {outcome.train_nll:.6f}")
        if not outcome.ok:
            raise StageError(stage, outcome.message)
        models.append(bd.load_bundle(mdir))

    figures = os.path.join(out_dir, "figures") if cfg["figures"] else None
    try:
        rows = evaluate_models(models, test, cfg["against"],
                               os.path.join(out_dir, "comparison.csv"),
                               os.path.join(out_dir, "predictions"), figures)
    except PoissonBnnError as exc:
        raise StageError("evaluate", exc) from exc

    summary = []
    for m in models:
        if m.kind not in ("hmc", "hybrid") or len(m.chains) < 2:
            continue
        try:
            rep = diagnose_bundle(m, os.path.join(out_dir, "diagnostics", m.name),
                                  cfg["figures"])
        except PoissonBnnError as exc:
            raise StageError(f"diagnose:{m.name}", exc) from exc
        name, value = rep.worst
        summary.append([m.name, bd.fmt_float(rep.pass_fraction), name, bd.fmt_float(value)])
    if summary:
        with open(os.path.join(out_dir, "convergence.csv"), "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["model", "pass_fraction", "worst_statistic", "worst_epsr"])
            wr.writerows(summary)
    return rows


def cmd_bench(args) -> int:
    cfg = rc.load(args.config)
    if args.out:
        cfg["out"] = args.out
    try:
        rows = run_bench(cfg, cfg["out"])
    except StageError as exc:
        print(f"error: {exc} (earlier outputs kept in {cfg['out']})", file=sys.stderr)
        return 1
    _print_table(rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poisson-bnn", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write a simulated dataset CSV")
    s.add_argument("--scheme", type=int, required=True, help="simulation scheme 1-6")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit one model on the training split and write a bundle")
    f.add_argument("--data", required=True)
    f.add_argument("--target", default="t")
    f.add_argument("--model", choices=rc.MODEL_KINDS, required=True)
    f.add_argument("--hidden", type=int, default=5)
    f.add_argument("--alpha", type=float, default=0.075, help="initial/fixed prior precision")
    f.add_argument("--prior", choices=("single", "ard"), default=None,
                   help="default: ard for hybrid, single otherwise")
    f.add_argument("--chains", type=int, default=5, help="HMC chains (>= 2 enables diagnose)")
    f.add_argument("--restarts", type=int, default=10, help="ml committee size")
    f.add_argument("--max-iter", type=int, default=500)
    f.add_argument("--max-outer", type=int, default=20, help="evidence outer iterations")
    f.add_argument("--cv", action="store_true", help="ml: choose hidden/alpha by k-fold CV")
    f.add_argument("--folds", type=int, default=5)
    f.add_argument("--step-size", type=float, default=0.01)
    f.add_argument("--leapfrog", type=int, default=100)
    f.add_argument("--burn-in", type=int, default=5000)
    f.add_argument("--samples", type=int, default=5000)
    f.add_argument("--thin", type=int, default=1)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--train-fraction", type=float, default=0.8)
    f.add_argument("--standardize", action="store_true",
                   help="z-score covariates with training-split statistics")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("evaluate", help="score bundles on the test split")
    e.add_argument("--models", nargs="+", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--target", default=None)
    e.add_argument("--against", choices=("rate", "count"), default="rate")
    e.add_argument("--rows", choices=("test", "all"), default="test",
                   help="score the bundles' held-out split, or every row of --data")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    d = sub.add_parser("diagnose", help="EPSR report over a bundle's chains")
    d.add_argument("--model-bundle", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--no-figure", action="store_true")
    d.set_defaults(func=cmd_diagnose)

    b = sub.add_parser("bench", help="simulate/load, split, fit, evaluate, diagnose")
    b.add_argument("--config", required=True)
    b.add_argument("--out", default=None, help="override the config's output directory")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", RuntimeWarning)
    try:
        return args.func(args)
    except (PoissonBnnError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
