"""Command-line interface: gen-patients, train, explain, eval, sweep."""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from ._rng import derive_seed
from .baselines import _repid_solution
from .clustering import generalizability_loss
from .dataset import DatasetError, PatientGenConfig, generate_patients, load_csv
from .explainers import ExplainerConfig, ExplainerError
from .methods import METHODS, MethodSpec
from .metrics import evaluate
from .models import ModelError, TreeEnsemble, train_cart, train_forest
from .plotting import plot_cohorts, plot_locality, plot_sweep
from .reports import (dataset_hash, model_hash, read_json, solution_from_report, solution_report, write_csv,
                      write_json)

log = logging.getLogger("cohex")


class ConfigError(ValueError):
    """Invalid flags; exits with status 2."""


@dataclass
class RunConfig:
    data: Optional[str] = None
    generate: Optional[int] = None
    gen_seed: int = 0
    flip_prob: float = 0.2
    target: str = "label"
    categorical: list = field(default_factory=list)
    model: str = "cart"
    tree_depth: int = 2
    n_trees: int = 50
    min_leaf: int = 1
    method: MethodSpec = field(default_factory=MethodSpec)
    seed: int = 0

    def to_dict(self):
        d = asdict(self)
        d["method"] = self.method.to_dict()
        return d


# --------------------------------------------------------------------------- helpers

def _csv_list(text, cast=str):
    if text is None:
        return []
    return [cast(v.strip()) for v in str(text).split(",") if v.strip()]


def _out_dir(args):
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise RuntimeError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _load_data(cfg: RunConfig):
    if cfg.data:
        ds = load_csv(cfg.data, cfg.target, cfg.categorical)
        info = {"source": "csv", "path": cfg.data, "target": cfg.target, "categorical": cfg.categorical}
    elif cfg.generate:
        gen = PatientGenConfig(cfg.generate, cfg.gen_seed, cfg.flip_prob)
        ds = generate_patients(gen)
        info = {"source": "generated", "generator": asdict(gen)}
    else:
        raise ConfigError("either --data or --generate is required")
    info.update({"hash": dataset_hash(ds), "n_samples": ds.n_samples, "columns": list(ds.columns)})
    return ds, info


def _load_model(cfg: RunConfig, ds):
    if cfg.model == "cart":
        return train_cart(ds, cfg.tree_depth, cfg.min_leaf)
    if cfg.model == "forest":
        return train_forest(ds, cfg.n_trees, cfg.tree_depth, derive_seed(cfg.seed, 7), cfg.min_leaf)
    path = Path(cfg.model)
    if not path.is_file():
        raise ConfigError(f"--model must be cart, forest or an existing model file (got {cfg.model!r})")
    return TreeEnsemble.load(path)


def _explainer_config(args):
    return ExplainerConfig(method=args.explainer, n_perturbations=args.n_perturbations,
                           kernel_width=args.kernel_width, shapley_samples=args.shapley_samples,
                           exact_shapley_threshold=args.exact_shapley_threshold, seed=args.seed)


def _method_spec(args, name=None, k_star=None):
    name = name or args.method
    if name == "repid" and args.k_star is not None and name == args.method:
        raise ConfigError("method repid takes --max-depth, not --k-star")
    try:
        return _build_spec(args, name, k_star)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _build_spec(args, name, k_star):
    return MethodSpec(
        name=name,
        explainer=_explainer_config(args),
        k_star=k_star or args.k_star or 4,
        lam=args.lam,
        n_trials=args.trials,
        patience=args.patience,
        max_inner_iters=args.max_iters,
        restarts=args.restarts,
        max_depth=args.max_depth,
        gale=args.gale,
    )


def _run_config(args, method):
    return RunConfig(data=args.data, generate=args.generate, gen_seed=args.gen_seed, flip_prob=args.flip_prob,
                     target=args.target, categorical=_csv_list(args.categorical), model=args.model,
                     tree_depth=args.tree_depth, n_trees=args.n_trees, min_leaf=args.min_leaf,
                     method=method, seed=args.seed)


def _check_gale(spec, model):
    if spec.gale and not model.is_classifier:
        raise ConfigError("--gale is only valid for classification models")


# --------------------------------------------------------------------------- commands

def cmd_gen_patients(args):
    cfg = PatientGenConfig(args.n, args.seed, args.flip_prob, args.boundary_level)
    out = _out_dir(args)
    ds = generate_patients(cfg)
    ds.to_csv(out / "patients.csv", label_name="label")
    write_json(out / "gen.json", {"command": "gen-patients", **asdict(cfg), "hash": dataset_hash(ds)})
    log.info("wrote %d patients to %s", cfg.n, out / "patients.csv")


def cmd_train(args):
    cfg = _run_config(args, MethodSpec())
    if cfg.model not in ("cart", "forest"):
        raise ConfigError("train --model must be cart or forest")
    ds, info = _load_data(cfg)
    model = _load_model(cfg, ds)
    out = _out_dir(args)
    model.save(out / "model.json")
    pred = model.predict_label(ds.features)
    if model.is_classifier:
        fit = {"train_accuracy": float(np.mean(pred == ds.labels))}
    else:
        resid = ((ds.labels - pred) ** 2).sum()
        fit = {"train_r2": float(1.0 - resid / ((ds.labels - ds.labels.mean()) ** 2).sum())}
    write_json(out / "train.json", {"command": "train", "model": cfg.model, "tree_depth": cfg.tree_depth,
                                    "n_trees": cfg.n_trees, "seed": cfg.seed, "dataset": info,
                                    "model_hash": model_hash(model), **fit})


def cmd_explain(args):
    spec = _method_spec(args)
    cfg = _run_config(args, spec)
    ds, info = _load_data(cfg)
    model = _load_model(cfg, ds)
    _check_gale(spec, model)
    out = _out_dir(args)
    model.save(out / "model.json")
    sol = spec.run(model, ds, args.seed)
    report = solution_report(sol, ds, config=cfg.to_dict(), data_info=info,
                             model_info={"path": "model.json", "hash": model_hash(model), "task": model.task})
    write_json(out / "report.json", report)
    plot_cohorts(ds, sol, out / "cohorts.svg")
    log.info("%s: %d cohorts, objective %.6g", sol.method, sol.k, sol.objective)


def _load_report(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"report not found: {path}")
    report = read_json(path)
    cfg_d = dict(report["config"])
    spec = MethodSpec.from_dict(cfg_d.pop("method"))
    cfg = RunConfig(method=spec, **cfg_d)
    ds, info = _load_data(cfg)
    if info["hash"] != report["dataset"]["hash"]:
        raise RuntimeError(f"dataset hash mismatch for {path}: report {report['dataset']['hash']}, now {info['hash']}")
    model_path = path.parent / report["model"]["path"]
    model = TreeEnsemble.load(model_path)
    if model_hash(model) != report["model"]["hash"]:
        raise RuntimeError(f"model hash mismatch for {path}")
    return report, spec, ds, model


def cmd_eval(args):
    p_grid = _csv_list(args.p_grid, float)
    if not p_grid:
        raise ConfigError("--p-grid needs at least one probability")
    if any(not 0 <= p <= 1 for p in p_grid):
        raise ConfigError("--p-grid values must lie in [0, 1]")
    if args.repeats < 2 or args.t < 2 or args.draws < 2:
        raise ConfigError("--repeats, --t and --draws must be at least 2")
    loaded = [_load_report(p) for p in args.report]
    out = _out_dir(args)
    reports = []
    for report, spec, ds, model in loaded:
        sol = solution_from_report(report, ds)
        reports.append(evaluate(model, ds, spec, sol, p_grid=p_grid, repeats=args.repeats, t=args.t,
                                draws=args.draws, seed=args.seed))
    write_json(out / "metrics.json", {"command": "eval", "reports": list(args.report), "seed": args.seed,
                                      "metrics": [r.to_dict() for r in reports]})
    write_csv(out / "metrics.csv", [r.csv_row() for r in reports])
    plot_locality(reports, out / "locality.svg")


def _sweep_cell(model, ds, spec, method, k_star, seed):
    if method == "repid":
        depth = int(round(np.log2(k_star)))
        if 2 ** depth != k_star:
            return None
        sol = _repid_solution(model, ds, spec.make_explainer(), depth, False, spec.lam, k_star, None)
    else:
        sol = spec.with_k_star(k_star).run(model, ds, seed)
    return {"method": method, "k_star": k_star, "seed": seed, "k": sol.k,
            "generalizability_loss": generalizability_loss(sol.importances, sol.labels)}


def cmd_sweep(args):
    grid = _csv_list(args.k_star_grid, int)
    if len(grid) < 2:
        raise ConfigError("--k-star-grid needs at least two values")
    methods = _csv_list(args.methods)
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ConfigError(f"unknown methods {bad}")
    base = _method_spec(args, name="cohex", k_star=grid[0])
    cfg = _run_config(args, base)
    ds, info = _load_data(cfg)
    if max(grid) > ds.n_samples or min(grid) < 1:
        raise ConfigError("k* values must lie in [1, n_samples]")
    model = _load_model(cfg, ds)
    out = _out_dir(args)
    seeds = [derive_seed(args.seed, i) for i in range(args.seeds)]
    cells = [(m, k, s) for m in methods for k in grid for s in seeds]
    specs = {m: _method_spec(args, name=m, k_star=grid[0]) for m in methods}

    def run(cell):
        m, k, s = cell
        return _sweep_cell(model, ds, specs[m], m, k, s)

    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        rows = [r for r in pool.map(run, cells) if r is not None]
    write_csv(out / "sweep.csv", rows, ["method", "k_star", "seed", "generalizability_loss", "k"])
    summary = []
    for m in methods:
        for k in grid:
            vals = [r["generalizability_loss"] for r in rows if r["method"] == m and r["k_star"] == k]
            if vals:
                summary.append({"method": m, "k_star": k, "mean": float(np.mean(vals)),
                                "std": float(np.std(vals)), "n_seeds": len(vals)})
    write_csv(out / "sweep_summary.csv", summary, ["method", "k_star", "mean", "std", "n_seeds"])
    write_json(out / "sweep.json", {"command": "sweep", "config": cfg.to_dict(), "dataset": info,
                                    "model_hash": model_hash(model), "k_star_grid": grid, "methods": methods,
                                    "seeds": seeds, "summary": summary})
    plot_sweep(summary, out / "sweep.svg")


# --------------------------------------------------------------------------- parser

def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="master seed for all randomness")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker threads (sweep)")
    return p


def _data_flags(p):
    g = p.add_argument_group("data")
    g.add_argument("--data", help="CSV file with a header row")
    g.add_argument("--generate", type=int, help="generate this many synthetic patients instead of --data")
    g.add_argument("--gen-seed", type=int, default=0)
    g.add_argument("--flip-prob", type=float, default=0.2)
    g.add_argument("--target", default="label")
    g.add_argument("--categorical", help="comma-separated categorical columns")


def _model_flags(p):
    g = p.add_argument_group("model")
    g.add_argument("--model", default="cart", help="cart, forest or a model.json path")
    g.add_argument("--tree-depth", type=int, default=2)
    g.add_argument("--n-trees", type=int, default=50)
    g.add_argument("--min-leaf", type=int, default=1)


def _method_flags(p):
    g = p.add_argument_group("explainer")
    g.add_argument("--explainer", default="counterfactual", choices=["counterfactual", "linear_surrogate", "shapley"])
    g.add_argument("--n-perturbations", type=int, default=500)
    g.add_argument("--kernel-width", type=float)
    g.add_argument("--shapley-samples", type=int, default=200)
    g.add_argument("--exact-shapley-threshold", type=int, default=10)
    g = p.add_argument_group("method")
    g.add_argument("--method", default="cohex", choices=list(METHODS))
    g.add_argument("--gale", action="store_true", help="homogeneity re-weighting (vine/repid, classification)")
    g.add_argument("--k-star", type=int, help="desired number of cohorts (default 4)")
    g.add_argument("--lambda", dest="lam", type=float, default=1.0, help="cohort-count penalty weight")
    g.add_argument("--trials", type=int, default=10)
    g.add_argument("--patience", type=int, default=3)
    g.add_argument("--max-iters", type=int, default=50)
    g.add_argument("--restarts", type=int, default=3)
    g.add_argument("--max-depth", type=int, default=2, help="REPID tree depth")


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(prog="cohex", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-patients", parents=[common], help="write the synthetic patient CSV")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--flip-prob", type=float, default=0.2)
    p.add_argument("--boundary-level", type=float, default=0.4)
    p.set_defaults(func=cmd_gen_patients)

    p = sub.add_parser("train", parents=[common], help="train a tree model and write model.json")
    _data_flags(p)
    _model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("explain", parents=[common], help="run a cohort-explanation method, write report.json")
    _data_flags(p)
    _model_flags(p)
    _method_flags(p)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("eval", parents=[common], help="evaluate reports, write metrics.json/csv")
    p.add_argument("--report", action="append", required=True, help="report.json (repeatable)")
    p.add_argument("--p-grid", default="0.1,0.5,1.0")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--t", type=int, default=5)
    p.add_argument("--draws", type=int, default=20)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[common], help="generalizability loss over a k* grid")
    _data_flags(p)
    _model_flags(p)
    _method_flags(p)
    p.add_argument("--k-star-grid", default="2,4,8,16")
    p.add_argument("--methods", default="cohex,hier,vine,repid")
    p.add_argument("--seeds", type=int, default=10)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (ConfigError, DatasetError, ExplainerError, ModelError) as exc:
        print(f"cohex: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"cohex: failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
