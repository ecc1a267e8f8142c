"""Repeated-trial experiments comparing the supervised baseline with PMS2L."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .bounds import BoundParams, estimate_rademacher, theorem3_bound
from .clustering import Clusterer, assign_many, estimate_bounded_difference
from .confident import identify
from .data import SplitSpec, build_dataset, labels_of, load_libsvm, make_synthetic_blobs, to_matrix
from .errors import ArgumentError, ConfigurationError, Pms2lError
from .objective import make_batch, risk
from .trainer import TrainConfig, default_budget_grid, fit_batch, predict_many, select_budget_batch

log = logging.getLogger(__name__)

METHODS = ("SUP", "PMS2L")


def accuracy(model, test) -> float:
    if len(test) == 0:
        raise ArgumentError("empty test set")
    X = to_matrix(test, model.dimension)
    return float(np.mean(predict_many(model, X) == labels_of(test)))


def wilcoxon_rank_sum(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sided rank-sum p-value, normal approximation with tie and continuity corrections."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 4 or b.size < 4:
        raise ArgumentError("rank-sum test needs at least 4 observations per sample")
    n1, n2 = a.size, b.size
    N = n1 + n2
    ranks = rankdata(np.concatenate([a, b]))
    w = ranks[:n1].sum()
    _, ties = np.unique(ranks, return_counts=True)
    var = n1 * n2 / 12.0 * ((N + 1) - np.sum(ties**3 - ties) / (N * (N - 1)))
    if var <= 0:
        return 1.0
    z = max(abs(w - n1 * (N + 1) / 2.0) - 0.5, 0.0) / math.sqrt(var)
    return min(1.0, math.erfc(z / math.sqrt(2)))


@dataclass(frozen=True)
class TrialResult:
    method: str
    trial_seed: int
    test_accuracy: float
    empirical_risk: float
    bound_total: float | None = None
    trial_index: int = 0
    budget: float | None = None
    n_confident: int = 0


@dataclass(frozen=True)
class ExperimentSummary:
    per_method: dict
    p_value: float | None
    bound_violation_rate: float | None
    L_hat: float
    trials: tuple = ()

    def to_json(self) -> dict:
        return {
            "per_method": self.per_method,
            "p_value": self.p_value,
            "bound_violation_rate": self.bound_violation_rate,
            "L_hat": self.L_hat,
        }


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs; ``dataset`` is ``"blobs"`` or ``"libsvm"``."""

    dataset: str = "blobs"
    train_path: str | None = None
    test_path: str | None = None
    num_classes: int = 4
    pool_per_class: int = 105
    test_per_class: int = 100
    separation: float = 8.0
    noise: float = 1.0
    labeled_fraction: float = 20 / 420
    per_class_minimum: int = 5
    normalize: bool = False
    trials: int = 10
    master_seed: int = 0
    methods: tuple = METHODS
    G: int | None = None
    kappa: int = 2
    eta: float = 1e-3
    rho: float = 1.0
    iterations: int = 500
    step_scale: float = 1.0
    B: float = 1.0
    cv_folds: int = 5
    B_grid: tuple = field(default_factory=default_budget_grid)
    surrogate: str = "hinge"
    delta: float = 0.05
    mc_draws: int = 200
    L: float | None = None
    stability_trials: int = 5
    stability_sample_size: int | None = None
    jobs: int = 1

    def __post_init__(self):
        if self.dataset not in ("blobs", "libsvm"):
            raise ConfigurationError(f"unknown dataset kind {self.dataset!r}")
        if self.dataset == "libsvm" and not (self.train_path and self.test_path):
            raise ConfigurationError("libsvm experiments need train_path and test_path")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        bad = set(self.methods) - set(METHODS)
        if bad or not self.methods:
            raise ConfigurationError(f"unknown methods {sorted(bad)}")
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "B_grid", tuple(float(b) for b in self.B_grid))

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(obj) - known
        if extra:
            raise ConfigurationError(f"unknown experiment fields {sorted(extra)}")
        return cls(**obj)

    def to_json(self) -> dict:
        out = asdict(self)
        out["methods"] = list(self.methods)
        out["B_grid"] = list(self.B_grid)
        return out

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(self.iterations, self.step_scale, self.B, self.rho, seed, self.cv_folds, self.B_grid, self.surrogate)


def load_pools(cfg: ExperimentConfig):
    """Training pool and fixed test samples for ``cfg``."""
    if cfg.dataset == "blobs":
        pool = make_synthetic_blobs(cfg.num_classes, cfg.pool_per_class, cfg.separation, cfg.noise, cfg.master_seed, centers_seed=cfg.master_seed)
        test = make_synthetic_blobs(cfg.num_classes, cfg.test_per_class, cfg.separation, cfg.noise, cfg.master_seed + 1, centers_seed=cfg.master_seed)
        return pool, test.samples
    pool = load_libsvm(cfg.train_path)
    test = load_libsvm(cfg.test_path, label_values=pool.label_values)
    return pool, test.samples


def trial_seeds(master_seed: int, trials: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(master_seed).spawn(trials)]


def estimate_L(cfg: ExperimentConfig, pool) -> float:
    """Bounded-difference constant of the clusterer on the training pool (features only)."""
    if cfg.L is not None:
        return float(cfg.L)
    if cfg.stability_trials < 1:
        raise ConfigurationError("need either L or stability_trials >= 1")
    X = to_matrix(pool.samples, pool.dimension)
    G = cfg.G or 4 * pool.num_classes
    size = cfg.stability_sample_size or X.shape[0] // 2
    eval_size = X.shape[0] - size - 1
    return estimate_bounded_difference(Clusterer(G, seed=cfg.master_seed), X, size, eval_size, cfg.stability_trials, cfg.master_seed)


def run_trial(cfg: ExperimentConfig, pool, test, index: int, seed: int, L: float) -> list[TrialResult]:
    try:
        ds = build_dataset(pool, test, SplitSpec(cfg.labeled_fraction, cfg.per_class_minimum, seed), cfg.normalize)
        K = ds.num_classes
        G = cfg.G or 4 * K
        X_unl = to_matrix(ds.unlabeled, ds.dimension)
        partition = Clusterer(G, seed=seed).fit(X_unl)
        lab_cluster = assign_many(partition, to_matrix(ds.labeled, ds.dimension))
        confident = identify(lab_cluster, labels_of(ds.labeled), partition.assign, G, K, cfg.kappa, cfg.eta)
        batch = make_batch(ds.labeled, ds.unlabeled, partition, confident, K, ds.dimension)
        tcfg = cfg.train_config(seed)
        results = []
        for method in cfg.methods:
            b = batch if method == "PMS2L" else batch.supervised()
            B = select_budget_batch(b, tcfg) if cfg.cv_folds >= 2 else cfg.B
            model = fit_batch(b, tcfg.with_budget(B))
            r = risk(model, b, cfg.rho)
            bound = None
            if ds.n >= 2 and ds.u >= 2:
                rad = estimate_rademacher(b, G, ds.feature_radius, B, cfg.mc_draws, seed)
                n_eta = int(np.isin(b.lab_cluster, b.confident_ids).sum())
                params = BoundParams(ds.n, ds.u, G, K, cfg.kappa, cfg.rho, cfg.delta, L, n_eta, b.X_pen.shape[0], ds.feature_radius, B)
                bound = theorem3_bound(r, rad, params).total
            results.append(
                TrialResult(method, seed, accuracy(model, ds.test), r.total, bound, index, B, len(b.confident_ids))
            )
        return results
    except Pms2lError as exc:
        raise type(exc)(f"trial {index}: {exc}") from exc


def summarize(results: Sequence[TrialResult], methods: Sequence[str], L: float) -> ExperimentSummary:
    results = sorted(results, key=lambda r: (r.trial_index, methods.index(r.method)))
    per_method, acc = {}, {}
    for m in methods:
        a = np.array([r.test_accuracy for r in results if r.method == m])
        acc[m] = a
        per_method[m] = {
            "mean": float(a.mean()),
            "std": float(a.std(ddof=1)) if a.size > 1 else 0.0,
            "trials": int(a.size),
        }
    p = None
    if len(methods) == 2 and all(acc[m].size >= 4 for m in methods):
        p = wilcoxon_rank_sum(acc[methods[0]], acc[methods[1]])
    target = "PMS2L" if "PMS2L" in methods else methods[0]
    checked = [r for r in results if r.method == target and r.bound_total is not None]
    rate = None
    if checked:
        rate = float(np.mean([(1.0 - r.test_accuracy) > r.bound_total for r in checked]))
    return ExperimentSummary(per_method, p, rate, L, tuple(results))


def run_experiment(cfg: ExperimentConfig) -> ExperimentSummary:
    """Split, cluster, select confident clusters and train every method, once per trial."""
    pool, test = load_pools(cfg)
    L = estimate_L(cfg, pool)
    seeds = trial_seeds(cfg.master_seed, cfg.trials)
    if cfg.jobs > 1:
        from joblib import Parallel, delayed

        chunks = Parallel(n_jobs=cfg.jobs)(delayed(run_trial)(cfg, pool, test, i, s, L) for i, s in enumerate(seeds))
    else:
        chunks = []
        for i, s in enumerate(seeds):
            chunks.append(run_trial(cfg, pool, test, i, s, L))
            log.info("trial %d/%d done", i + 1, cfg.trials)
    return summarize([r for c in chunks for r in c], list(cfg.methods), L)


def learning_curve(cfg: ExperimentConfig, fractions: Sequence[float]) -> list[dict]:
    """Mean/std accuracy per method for each labeled fraction."""
    rows = []
    for frac in fractions:
        summary = run_experiment(replace(cfg, labeled_fraction=float(frac)))
        for m in cfg.methods:
            s = summary.per_method[m]
            rows.append({"fraction": float(frac), "method": m, "mean": s["mean"], "std": s["std"]})
    return rows


def _fmt(v):
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, float) else str(v)


def trials_csv(results: Sequence[TrialResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "seed", "accuracy", "bound", "risk"])
    for r in results:
        w.writerow([r.method, r.trial_seed, _fmt(r.test_accuracy), _fmt(r.bound_total), _fmt(r.empirical_risk)])
    return buf.getvalue()


def curve_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["fraction", "method", "mean", "std"])
    for r in rows:
        w.writerow([_fmt(r["fraction"]), r["method"], _fmt(r["mean"]), _fmt(r["std"])])
    return buf.getvalue()
