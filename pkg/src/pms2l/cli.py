"""Command-line pipeline: split, cluster, confident, train, stability, bound, experiment.

Each stage reads the artifacts of earlier stages from ``--workdir`` and writes
its own JSON (or CSV) there. Running a stage before its inputs exist exits
with status 2. Usage errors exit 1 and data errors exit 3; every failure is
reported as one JSON line on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bounds import BoundParams, corollary4_bound, estimate_rademacher, lemma2_diagnostics, theorem3_bound
from .clustering import Clusterer, Partition, assign_many, estimate_stability
from .confident import ConfidentClusterSet, identify
from .data import (
    Dataset,
    SplitSpec,
    l2_normalize,
    labels_of,
    load_libsvm,
    make_synthetic_blobs,
    split_indices,
    to_matrix,
)
from .errors import ArgumentError, ConfigurationError, MissingPrerequisite, Pms2lError
from .evaluation import ExperimentConfig, curve_csv, learning_curve, run_experiment, trials_csv
from .objective import make_batch, risk
from .trainer import LinearModel, TrainConfig, default_budget_grid, fit_batch, select_budget_batch

log = logging.getLogger("pms2l")


@dataclass(frozen=True)
class Param:
    name: str
    type: type
    default: object
    help: str
    nargs: str | None = None

    @property
    def flag(self) -> str:
        return "--" + self.name.replace("_", "-")

    def describe(self) -> dict:
        kind = self.type.__name__ if self.nargs is None else f"list[{self.type.__name__}]"
        default = list(self.default) if isinstance(self.default, tuple) else self.default
        return {"name": self.name, "flag": self.flag, "type": kind, "default": default, "help": self.help}


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    lowered = str(text).lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


_bool.__name__ = "bool"

COMMON = [
    Param("workdir", str, ".", "directory holding the stage artifacts"),
    Param("config", str, None, "JSON file of parameter values; flags override it"),
    Param("seed", int, 0, "master seed; fixes all randomness"),
    Param("jobs", int, 1, "maximum worker processes"),
]

SPLIT = [
    Param("train", str, None, "LIBSVM training pool (omit for synthetic blobs)"),
    Param("test", str, None, "LIBSVM test file (omit for synthetic blobs)"),
    Param("classes", int, 4, "synthetic blobs: number of classes"),
    Param("per_class", int, 105, "synthetic blobs: training points per class"),
    Param("test_per_class", int, 100, "synthetic blobs: test points per class"),
    Param("separation", float, 8.0, "synthetic blobs: distance between neighbouring centers"),
    Param("noise", float, 1.0, "synthetic blobs: per-coordinate standard deviation"),
    Param("labeled_fraction", float, 20 / 420, "fraction of the training pool kept labeled"),
    Param("per_class_minimum", int, 5, "labeled examples guaranteed per class"),
    Param("normalize", _bool, False, "scale every sample to unit norm"),
]

CLUSTER = [
    Param("G", int, None, "number of clusters (default 4K)"),
    Param("max_iters", int, 100, "Lloyd iteration cap"),
    Param("tolerance", float, 1e-6, "center-movement stopping threshold"),
]

CONFIDENT = [
    Param("kappa", int, 2, "predominant classes per cluster"),
    Param("eta", float, 1e-3, "confidence level; clusters keep violation mass <= eta/G"),
]

TRAIN = [
    Param("supervised", _bool, False, "ignore the unlabeled data (the SUP baseline)"),
    Param("iterations", int, 500, "projected subgradient steps T"),
    Param("step_scale", float, 1.0, "step size constant c in c/sqrt(t)"),
    Param("B", float, None, "norm budget; selected by cross-validation when omitted"),
    Param("B_grid", float, default_budget_grid(), "candidate budgets for cross-validation", "+"),
    Param("cv_folds", int, 5, "stratified folds for budget selection"),
    Param("rho", float, 1.0, "margin parameter of the ramp loss"),
    Param("surrogate", str, "hinge", "descent direction: hinge or ramp"),
]

STABILITY = [
    Param("G", int, None, "number of clusters (default 4K)"),
    Param("sample_size", int, None, "points per refit (default half the pool)"),
    Param("trials", int, 20, "refits per estimate"),
    Param("L", float, None, "skip estimating the bounded-difference constant and use this value"),
]

BOUND = [
    Param("delta", float, 0.05, "confidence parameter"),
    Param("mc_draws", int, 200, "Monte-Carlo sign draws per Rademacher estimate"),
    Param("L", float, None, "bounded-difference constant (default: stability.json)"),
]

EXPERIMENT = [
    Param("dataset", str, "blobs", "blobs or libsvm"),
    Param("train_path", str, None, "LIBSVM training pool"),
    Param("test_path", str, None, "LIBSVM test file"),
    Param("num_classes", int, 4, "synthetic blobs: number of classes"),
    Param("pool_per_class", int, 105, "synthetic blobs: training points per class"),
    Param("test_per_class", int, 100, "synthetic blobs: test points per class"),
    Param("separation", float, 8.0, "synthetic blobs: distance between neighbouring centers"),
    Param("noise", float, 1.0, "synthetic blobs: per-coordinate standard deviation"),
    Param("labeled_fraction", float, 20 / 420, "fraction of the training pool kept labeled"),
    Param("per_class_minimum", int, 5, "labeled examples guaranteed per class"),
    Param("normalize", _bool, False, "scale every sample to unit norm"),
    Param("trials", int, 10, "independent labeled/unlabeled resplits"),
    Param("G", int, None, "number of clusters (default 4K)"),
    Param("kappa", int, 2, "predominant classes per cluster"),
    Param("eta", float, 1e-3, "confidence level"),
    Param("rho", float, 1.0, "margin parameter of the ramp loss"),
    Param("iterations", int, 500, "projected subgradient steps T"),
    Param("step_scale", float, 1.0, "step size constant c"),
    Param("B", float, 1.0, "norm budget used when cv_folds < 2"),
    Param("B_grid", float, default_budget_grid(), "candidate budgets for cross-validation", "+"),
    Param("cv_folds", int, 5, "stratified folds for budget selection (0 disables)"),
    Param("surrogate", str, "hinge", "descent direction: hinge or ramp"),
    Param("delta", float, 0.05, "confidence parameter of the bound"),
    Param("mc_draws", int, 200, "Monte-Carlo sign draws"),
    Param("L", float, None, "bounded-difference constant (estimated when omitted)"),
    Param("stability_trials", int, 5, "refits used to estimate L"),
    Param("curve", float, None, "labeled fractions for a learning curve", "+"),
]

COMMANDS = {
    "split": (SPLIT, "draw the labeled/unlabeled split", "split.json, manifest.json"),
    "cluster": (CLUSTER, "partition the unlabeled set with seeded k-means", "partition.json"),
    "confident": (CONFIDENT, "select the clusters dominated by few labeled classes", "confident.json"),
    "train": (TRAIN, "fit the penalized (or supervised) linear model", "model.json, risk.json"),
    "stability": (STABILITY, "estimate clustering stability and the constant L", "stability.json"),
    "bound": (BOUND, "evaluate the generalization bounds for the trained model", "bound.json"),
    "experiment": (EXPERIMENT, "repeated-trial SUP vs PMS2L comparison", "summary.json, trials.csv[, curve.csv]"),
}


class UsageError(Pms2lError):
    exit_code = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pms2l", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="WARNING", help="logging verbosity")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, (params, summary, outputs) in COMMANDS.items():
        p = sub.add_parser(name, help=summary, description=f"{summary}. Writes {outputs}.")
        p.add_argument("--describe", action="store_true", help="print the parameter schema as JSON and exit")
        for prm in COMMON + params:
            kwargs = {"type": prm.type, "default": argparse.SUPPRESS, "dest": prm.name}
            if prm.nargs:
                kwargs["nargs"] = prm.nargs
            shown = list(prm.default) if isinstance(prm.default, tuple) else prm.default
            p.add_argument(prm.flag, help=f"{prm.help} (default: {shown})", **kwargs)
    return parser


def resolve(command: str, ns: argparse.Namespace) -> dict:
    """Parameter values: schema defaults, then the config file, then explicit flags."""
    params = COMMON + COMMANDS[command][0]
    values = {p.name: p.default for p in params}
    given = vars(ns)
    config_path = given.get("config")
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text())
        except FileNotFoundError:
            raise ArgumentError(f"config file {config_path} not found") from None
        except json.JSONDecodeError as exc:
            raise ArgumentError(f"config file {config_path} is not valid JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise ArgumentError("config file must hold a JSON object")
        by_name = {p.name: p for p in params}
        for key, value in loaded.items():
            if key not in by_name:
                raise ArgumentError(f"unknown parameter {key!r} in config for {command}")
            prm = by_name[key]
            if value is not None:
                value = tuple(prm.type(v) for v in value) if prm.nargs else prm.type(value)
            values[key] = value
    for p in params:
        if p.name in given:
            v = given[p.name]
            values[p.name] = tuple(v) if p.nargs else v
    if values["jobs"] < 1:
        raise ArgumentError("--jobs must be >= 1")
    return values


def describe(command: str) -> dict:
    params, summary, outputs = COMMANDS[command]
    return {
        "command": command,
        "summary": summary,
        "outputs": outputs,
        "parameters": [p.describe() for p in COMMON + params],
    }


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(workdir: Path, name: str, obj) -> Path:
    path = workdir / name
    path.write_text(_dump(obj))
    return path


def read_json(workdir: Path, name: str, stage: str) -> dict:
    path = workdir / name
    if not path.exists():
        raise MissingPrerequisite(name, stage)
    return json.loads(path.read_text())


def _source_pools(source: dict):
    if source["kind"] == "libsvm":
        pool = load_libsvm(source["train"])
        test = load_libsvm(source["test"], label_values=pool.label_values)
        return pool, test.samples
    pool = make_synthetic_blobs(source["classes"], source["per_class"], source["separation"], source["noise"], source["seed"], centers_seed=source["seed"])
    test = make_synthetic_blobs(source["classes"], source["test_per_class"], source["separation"], source["noise"], source["seed"] + 1, centers_seed=source["seed"])
    return pool, test.samples


def load_dataset(workdir: Path) -> Dataset:
    """Rebuild the split dataset recorded in ``split.json``."""
    rec = read_json(workdir, "split.json", "split")
    pool, test = _source_pools(rec["source"])
    labeled = [pool.samples[i] for i in rec["labeled_index"]]
    unlabeled = [pool.samples[i].with_label(None) for i in rec["unlabeled_index"]]
    dim = max([pool.dimension] + [int(s.indices[-1]) + 1 for s in test if s.indices.size])
    ds = Dataset(labeled, unlabeled, test, pool.num_classes, dim)
    return l2_normalize(ds) if rec["normalize"] else ds


def cmd_split(cfg: dict, workdir: Path) -> list[Path]:
    if (cfg["train"] is None) != (cfg["test"] is None):
        raise ArgumentError("--train and --test must be given together")
    if cfg["train"] is not None:
        source = {"kind": "libsvm", "train": str(Path(cfg["train"]).resolve()), "test": str(Path(cfg["test"]).resolve())}
    else:
        source = {
            "kind": "blobs",
            "classes": cfg["classes"],
            "per_class": cfg["per_class"],
            "test_per_class": cfg["test_per_class"],
            "separation": cfg["separation"],
            "noise": cfg["noise"],
            "seed": cfg["seed"],
        }
    pool, _ = _source_pools(source)
    spec = SplitSpec(cfg["labeled_fraction"], cfg["per_class_minimum"], cfg["seed"])
    lab, unl = split_indices(pool.labels, pool.num_classes, spec)
    rec = {
        "source": source,
        "labeled_fraction": spec.labeled_fraction,
        "per_class_minimum": spec.per_class_minimum,
        "seed": spec.seed,
        "normalize": bool(cfg["normalize"]),
        "label_values": list(pool.label_values),
        "labeled_index": lab.tolist(),
        "unlabeled_index": unl.tolist(),
    }
    out = [write_json(workdir, "split.json", rec)]
    out.append(write_json(workdir, "manifest.json", load_dataset(workdir).manifest()))
    return out


def _num_clusters(G, ds: Dataset) -> int:
    return 4 * ds.num_classes if G is None else G


def cmd_cluster(cfg: dict, workdir: Path) -> list[Path]:
    ds = load_dataset(workdir)
    if ds.u == 0:
        raise ConfigurationError("the split left no unlabeled data to cluster")
    clusterer = Clusterer(_num_clusters(cfg["G"], ds), max_iters=cfg["max_iters"], tolerance=cfg["tolerance"], seed=cfg["seed"])
    partition = clusterer.fit(to_matrix(ds.unlabeled, ds.dimension))
    return [write_json(workdir, "partition.json", partition.to_json())]


def _load_partition(workdir: Path) -> Partition:
    return Partition.from_json(read_json(workdir, "partition.json", "cluster"))


def cmd_confident(cfg: dict, workdir: Path) -> list[Path]:
    ds = load_dataset(workdir)
    partition = _load_partition(workdir)
    if partition.assign.size != ds.u:
        raise ConfigurationError("partition.json does not match the unlabeled set of split.json")
    lab_cluster = assign_many(partition, to_matrix(ds.labeled, ds.dimension))
    conf = identify(lab_cluster, labels_of(ds.labeled), partition.assign, partition.num_clusters, ds.num_classes, cfg["kappa"], cfg["eta"])
    return [write_json(workdir, "confident.json", conf.to_json())]


def _batch(workdir: Path, ds: Dataset, supervised: bool):
    if supervised:
        return make_batch(ds.labeled, ds.unlabeled, None, None, ds.num_classes, ds.dimension), None, None
    confident = ConfidentClusterSet.from_json(read_json(workdir, "confident.json", "confident"))
    partition = _load_partition(workdir)
    if partition.dimension != ds.dimension:
        raise ConfigurationError(f"partition dimension {partition.dimension} != data dimension {ds.dimension}")
    return make_batch(ds.labeled, ds.unlabeled, partition, confident, ds.num_classes, ds.dimension), partition, confident


def cmd_train(cfg: dict, workdir: Path) -> list[Path]:
    ds = load_dataset(workdir)
    batch, _, _ = _batch(workdir, ds, cfg["supervised"])
    tcfg = TrainConfig(
        cfg["iterations"], cfg["step_scale"], cfg["B"] or 1.0, cfg["rho"], cfg["seed"], cfg["cv_folds"], cfg["B_grid"], cfg["surrogate"]
    )
    B = cfg["B"] if cfg["B"] is not None else select_budget_batch(batch, tcfg)
    model = fit_batch(batch, tcfg.with_budget(B))
    r = risk(model, batch, cfg["rho"])
    report = {"method": "SUP" if cfg["supervised"] else "PMS2L", "B": B, "risk": r.to_json()}
    return [write_json(workdir, "model.json", model.to_json()), write_json(workdir, "risk.json", report)]


def cmd_stability(cfg: dict, workdir: Path) -> list[Path]:
    ds = load_dataset(workdir)
    if ds.u < 2:
        raise ConfigurationError("stability needs at least two unlabeled samples")
    X = to_matrix(ds.unlabeled, ds.dimension)
    size = cfg["sample_size"] or max(1, ds.u // 2)
    clusterer = Clusterer(_num_clusters(cfg["G"], ds), seed=cfg["seed"])
    est = estimate_stability(clusterer, X, size, to_matrix(ds.labeled, ds.dimension), cfg["trials"], cfg["seed"], cfg["L"])
    out = est.to_json()
    out.update({"sample_size": size, "G": clusterer.num_clusters, "estimate": True, "L_supplied": cfg["L"] is not None})
    return [write_json(workdir, "stability.json", out)]


def cmd_bound(cfg: dict, workdir: Path) -> list[Path]:
    ds = load_dataset(workdir)
    model = LinearModel.from_json(read_json(workdir, "model.json", "train"))
    L_is_estimate = cfg["L"] is None
    L = cfg["L"] if cfg["L"] is not None else read_json(workdir, "stability.json", "stability")["L_hat"]
    has_confident = (workdir / "confident.json").exists()
    batch, partition, confident = _batch(workdir, ds, not has_confident)
    G = partition.num_clusters if partition is not None else 4 * ds.num_classes
    confident = confident or ConfidentClusterSet.empty(G)
    r = risk(model, batch, model.rho)
    rad = estimate_rademacher(batch, G, ds.feature_radius, model.norm_budget, cfg["mc_draws"], cfg["seed"])
    params = BoundParams(
        ds.n, ds.u, G, ds.num_classes, confident.kappa, model.rho, cfg["delta"], float(L),
        int(np.isin(batch.lab_cluster, batch.confident_ids).sum()), int(batch.X_pen.shape[0]),
        ds.feature_radius, model.norm_budget,
    )
    report = {
        "theorem3": theorem3_bound(r, rad, params, L_is_estimate).to_json(),
        "corollary4": corollary4_bound(r, params, L_is_estimate).to_json(),
        "lemma2": lemma2_diagnostics(r, rad, confident, params),
        "risk": r.to_json(),
    }
    return [write_json(workdir, "bound.json", report)]


def cmd_experiment(cfg: dict, workdir: Path) -> list[Path]:
    fields = set(ExperimentConfig.__dataclass_fields__)
    kwargs = {k: v for k, v in cfg.items() if k in fields and v is not None}
    kwargs["master_seed"] = cfg["seed"]
    kwargs["jobs"] = cfg["jobs"]
    exp = ExperimentConfig(**kwargs)
    summary = run_experiment(exp)
    doc = summary.to_json()
    doc["config"] = exp.to_json()
    out = [write_json(workdir, "summary.json", doc)]
    path = workdir / "trials.csv"
    path.write_text(trials_csv(summary.trials))
    out.append(path)
    if cfg["curve"]:
        path = workdir / "curve.csv"
        path.write_text(curve_csv(learning_curve(exp, cfg["curve"])))
        out.append(path)
    return out


HANDLERS = {
    "split": cmd_split,
    "cluster": cmd_cluster,
    "confident": cmd_confident,
    "train": cmd_train,
    "stability": cmd_stability,
    "bound": cmd_bound,
    "experiment": cmd_experiment,
}


def _fail(exc: Exception, code: int) -> int:
    payload = {"error": type(exc).__name__, "exit_code": code, "message": str(exc)}
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        if ns.command is None:
            raise UsageError("a command is required: " + ", ".join(COMMANDS))
        logging.basicConfig(level=ns.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
        if ns.describe:
            sys.stdout.write(_dump(describe(ns.command)))
            return 0
        cfg = resolve(ns.command, ns)
        workdir = Path(cfg["workdir"])
        workdir.mkdir(parents=True, exist_ok=True)
        for path in HANDLERS[ns.command](cfg, workdir):
            log.info("wrote %s", path)
        return 0
    except Pms2lError as exc:
        return _fail(exc, exc.exit_code)
    except (ValueError, TypeError) as exc:
        return _fail(exc, 1)
    except OSError as exc:
        return _fail(exc, 3)


if __name__ == "__main__":
    sys.exit(main())
