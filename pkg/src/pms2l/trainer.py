"""Norm-constrained linear multiclass models fit by projected subgradient descent."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, Sample, to_matrix
from .errors import ConfigurationError
from .objective import Batch, make_batch, value_and_subgradient


@dataclass(frozen=True, eq=False)
class LinearModel:
    weights: np.ndarray
    norm_budget: float
    rho: float = 1.0

    def __post_init__(self):
        W = np.array(self.weights, dtype=np.float64)
        if W.ndim != 2 or not np.all(np.isfinite(W)):
            raise ConfigurationError("weights must be a finite K x d matrix")
        W.setflags(write=False)
        object.__setattr__(self, "weights", W)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dimension(self) -> int:
        return self.weights.shape[1]

    @property
    def group_norm(self) -> float:
        return float(np.linalg.norm(self.weights))

    def scores(self, X) -> np.ndarray:
        return np.asarray(X @ self.weights.T)

    def to_json(self) -> dict:
        return {
            "K": self.num_classes,
            "d": self.dimension,
            "B": self.norm_budget,
            "rho": self.rho,
            "weights": self.weights.ravel().tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LinearModel":
        W = np.array(obj["weights"], dtype=np.float64).reshape(int(obj["K"]), int(obj["d"]))
        return cls(W, float(obj["B"]), float(obj["rho"]))


def default_budget_grid() -> tuple:
    return tuple(np.logspace(-2, 2, 9).tolist())


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 500
    step_scale: float = 1.0
    B: float = 1.0
    rho: float = 1.0
    seed: int = 0
    cv_folds: int = 5
    B_grid: tuple = field(default_factory=default_budget_grid)
    surrogate: str = "hinge"

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigurationError("iterations must be >= 1")
        if self.step_scale <= 0 or self.B <= 0 or self.rho <= 0:
            raise ConfigurationError("step_scale, B and rho must be > 0")
        if self.surrogate not in ("hinge", "ramp"):
            raise ConfigurationError(f"unknown surrogate {self.surrogate!r}")
        object.__setattr__(self, "B_grid", tuple(float(b) for b in self.B_grid))

    def with_budget(self, B: float) -> "TrainConfig":
        return replace(self, B=B)


def predict_many(model: LinearModel, X) -> np.ndarray:
    return np.argmax(model.scores(X), axis=1)


def predict(model: LinearModel, x: Sample) -> int:
    """Highest-scoring class; indices beyond the model dimension are ignored."""
    return int(predict_many(model, to_matrix([x], model.dimension))[0])


def _project(W: np.ndarray, B: float) -> np.ndarray:
    nrm = np.linalg.norm(W)
    return W * (B / nrm) if nrm > B else W


@dataclass
class TrainTrace:
    objectives: list = field(default_factory=list)
    best_iteration: int = 0


def fit_batch(batch: Batch, cfg: TrainConfig, trace: TrainTrace | None = None) -> LinearModel:
    """Full-batch projected descent from W = 0 with steps c/sqrt(t).

    Directions come from ``cfg.surrogate`` (see ``value_and_subgradient``).
    The returned model is the post-step iterate with the lowest penalized
    risk, earliest on ties; the trajectory itself is not monotone.
    """
    W = np.zeros((batch.num_classes, batch.dimension))
    _, _, g = value_and_subgradient(W, batch, cfg.rho, cfg.surrogate)
    best, best_val = None, math.inf
    for t in range(1, cfg.iterations + 1):
        W = _project(W - (cfg.step_scale / math.sqrt(t)) * g, cfg.B)
        labeled, penalty, g = value_and_subgradient(W, batch, cfg.rho, cfg.surrogate)
        val = labeled + penalty
        if trace is not None:
            trace.objectives.append(val)
        if val < best_val:
            best, best_val = W, val
            if trace is not None:
                trace.best_iteration = t
    return LinearModel(best, cfg.B, cfg.rho)


def _check_dimensions(data: Dataset, partition):
    if partition is not None and partition.centers is not None and partition.dimension != data.dimension:
        raise ConfigurationError(f"partition dimension {partition.dimension} != data dimension {data.dimension}")


def build_batch(data: Dataset, partition, confident) -> Batch:
    _check_dimensions(data, partition)
    return make_batch(data.labeled, data.unlabeled, partition, confident, data.num_classes, data.dimension)


def fit(data: Dataset, partition, confident, cfg: TrainConfig) -> LinearModel:
    return fit_batch(build_batch(data, partition, confident), cfg)


def fit_supervised(data: Dataset, cfg: TrainConfig) -> LinearModel:
    """Baseline that ignores the unlabeled data entirely."""
    return fit_batch(make_batch(data.labeled, data.unlabeled, None, None, data.num_classes, data.dimension), cfg)


def stratified_folds(labels: np.ndarray, folds: int, seed: int) -> list[np.ndarray]:
    labels = np.asarray(labels)
    if folds < 2:
        raise ConfigurationError("cv_folds must be >= 2")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(labels.size, dtype=np.int64)
    for k in np.unique(labels):
        members = np.flatnonzero(labels == k)
        if members.size < folds:
            raise ConfigurationError(f"class {k} has {members.size} labeled examples, fewer than {folds} folds")
        fold_of[rng.permutation(members)] = np.arange(members.size) % folds
    return [np.flatnonzero(fold_of == f) for f in range(folds)]


def cv_accuracy(batch: Batch, cfg: TrainConfig) -> float:
    folds = stratified_folds(batch.y, cfg.cv_folds, cfg.seed)
    accs = []
    for held in folds:
        train_rows = np.setdiff1d(np.arange(batch.n), held)
        model = fit_batch(batch.subset(train_rows), cfg)
        accs.append(float(np.mean(predict_many(model, batch.X_lab[held]) == batch.y[held])))
    return float(np.mean(accs))


def select_budget_batch(batch: Batch, cfg: TrainConfig) -> float:
    grid = sorted(set(cfg.B_grid))
    if not grid:
        raise ConfigurationError("empty budget grid")
    if len(grid) == 1:
        return grid[0]
    best_B, best_acc = grid[0], -1.0
    for B in grid:
        acc = cv_accuracy(batch, cfg.with_budget(B))
        if acc > best_acc:
            best_B, best_acc = B, acc
    return best_B


def select_budget(data: Dataset, partition, confident, cfg: TrainConfig) -> float:
    """Budget with the best stratified cross-validated accuracy; smaller wins ties."""
    return select_budget_batch(build_batch(data, partition, confident), cfg)
