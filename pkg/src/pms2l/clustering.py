"""Seeded k-means partitions, minimal matching distance and stability estimates."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .data import Sample, densify_if_small, to_matrix
from .errors import ArgumentError, ConfigurationError


@dataclass(frozen=True, eq=False)
class Partition:
    num_clusters: int
    assign: np.ndarray
    centers: np.ndarray | None = None

    def __post_init__(self):
        a = np.asarray(self.assign, dtype=np.int64).reshape(-1)
        if a.size and (a.min() < 0 or a.max() >= self.num_clusters):
            raise ArgumentError("cluster id out of range")
        object.__setattr__(self, "assign", a)
        if self.centers is not None:
            c = np.asarray(self.centers, dtype=np.float64)
            if c.ndim != 2 or c.shape[0] != self.num_clusters:
                raise ArgumentError("need exactly one center per cluster")
            object.__setattr__(self, "centers", c)

    @property
    def dimension(self) -> int:
        return 0 if self.centers is None else self.centers.shape[1]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assign, minlength=self.num_clusters)

    def to_json(self) -> dict:
        return {
            "G": self.num_clusters,
            "assign": self.assign.tolist(),
            "centers": None if self.centers is None else self.centers.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Partition":
        centers = obj.get("centers")
        return cls(int(obj["G"]), np.array(obj["assign"], dtype=np.int64), None if centers is None else np.array(centers, dtype=np.float64).reshape(int(obj["G"]), -1))


def _sq_distances(X, centers: np.ndarray) -> np.ndarray:
    if sparse.issparse(X):
        x2 = np.asarray(X.multiply(X).sum(axis=1)).reshape(-1, 1)
        d = x2 - 2 * np.asarray(X @ centers.T) + (centers**2).sum(axis=1)
        return np.maximum(d, 0.0)
    return cdist(np.asarray(X, dtype=np.float64), centers, "sqeuclidean")


def nearest_center(X, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index of and squared distance to the nearest center; ties go to the lowest id."""
    d = _sq_distances(X, centers)
    labels = np.argmin(d, axis=1)
    return labels, d[np.arange(d.shape[0]), labels]


def _row(X, i) -> np.ndarray:
    r = X[i]
    return r.toarray().ravel() if sparse.issparse(r) else np.asarray(r, dtype=np.float64).ravel()


def kmeans_plusplus(X, num_clusters: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    first = int(rng.integers(n))
    chosen = [first]
    centers = [_row(X, first)]
    closest = _sq_distances(X, centers[0][None, :]).ravel()
    for _ in range(1, num_clusters):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            # every point coincides with a chosen center
            rest = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(rest))
        chosen.append(idx)
        centers.append(_row(X, idx))
        closest = np.minimum(closest, _sq_distances(X, centers[-1][None, :]).ravel())
    return np.array(centers)


def _repair_empty(X, labels, dist, centers, num_clusters):
    """Give each empty cluster the point farthest from its center.

    The donor cluster must keep at least one member; the emptied cluster's
    center moves onto the donated point so the objective cannot increase.
    """
    labels = labels.copy()
    dist = dist.copy()
    centers = centers.copy()
    counts = np.bincount(labels, minlength=num_clusters)
    for e in np.flatnonzero(counts == 0):
        eligible = counts[labels] >= 2
        cand = np.where(eligible, dist, -np.inf)
        i = int(np.argmax(cand))
        counts[labels[i]] -= 1
        labels[i] = e
        counts[e] = 1
        dist[i] = 0.0
        centers[e] = _row(X, i)
    return labels, dist, centers


def _cluster_means(X, labels, num_clusters) -> np.ndarray:
    n = X.shape[0]
    onehot = sparse.csr_matrix((np.ones(n), (labels, np.arange(n))), shape=(num_clusters, n))
    sums = onehot @ X
    sums = sums.toarray() if sparse.issparse(sums) else np.asarray(sums)
    counts = np.bincount(labels, minlength=num_clusters).astype(np.float64)
    return sums / counts[:, None]


def lloyd(X, centers: np.ndarray, max_iters: int, tolerance: float):
    """Lloyd iterations from ``centers``.

    Returns ``(labels, centers, objective_history)``; the history holds the
    within-cluster sum of squares after every assignment step.
    """
    num_clusters = centers.shape[0]
    history = []
    for _ in range(max_iters):
        labels, dist = nearest_center(X, centers)
        labels, dist, centers = _repair_empty(X, labels, dist, centers, num_clusters)
        history.append(float(dist.sum()))
        updated = _cluster_means(X, labels, num_clusters)
        shift = float(np.max(np.linalg.norm(updated - centers, axis=1)))
        centers = updated
        if shift < tolerance:
            break
    labels, dist = nearest_center(X, centers)
    labels, dist, centers = _repair_empty(X, labels, dist, centers, num_clusters)
    history.append(float(dist.sum()))
    return labels, centers, history


def _fit_kmeans_matrix(X, cfg: "Clusterer") -> Partition:
    rng = np.random.default_rng(cfg.seed)
    init = kmeans_plusplus(X, cfg.num_clusters, rng)
    labels, centers, _ = lloyd(X, init, cfg.max_iters, cfg.tolerance)
    return Partition(cfg.num_clusters, labels, centers)


CLUSTERING_METHODS: dict[str, Callable] = {"kmeans": _fit_kmeans_matrix}


@dataclass(frozen=True)
class Clusterer:
    """A clustering algorithm configuration; ``fit`` maps a point matrix to a Partition."""

    num_clusters: int
    method: str = "kmeans"
    max_iters: int = 100
    tolerance: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.num_clusters < 1:
            raise ConfigurationError("num_clusters must be >= 1")
        if self.tolerance <= 0:
            raise ConfigurationError("tolerance must be > 0")
        if self.method not in CLUSTERING_METHODS:
            raise ConfigurationError(f"unknown clustering method {self.method!r}")

    def fit(self, X) -> Partition:
        if X.shape[0] < self.num_clusters:
            raise ConfigurationError(f"{X.shape[0]} points cannot form {self.num_clusters} clusters")
        return CLUSTERING_METHODS[self.method](densify_if_small(X), self)


def _dimension(points: Sequence[Sample]) -> int:
    return max((int(s.indices[-1]) + 1 for s in points if s.indices.size), default=0)


def as_matrix(points, dimension: int | None = None):
    if sparse.issparse(points) or isinstance(points, np.ndarray):
        return points
    return to_matrix(points, _dimension(points) if dimension is None else dimension)


def fit_kmeans(points, cfg: Clusterer, dimension: int | None = None) -> Partition:
    """Seeded k-means++ / Lloyd partition of ``points`` (Samples or a matrix)."""
    return cfg.fit(as_matrix(points, dimension))


def assign(partition: Partition, x: Sample) -> int:
    if partition.centers is None:
        raise ConfigurationError("partition has no centers; cannot assign new points")
    return int(assign_many(partition, [x])[0])


def assign_many(partition: Partition, points) -> np.ndarray:
    if partition.centers is None:
        raise ConfigurationError("partition has no centers; cannot assign new points")
    X = as_matrix(points, partition.dimension)
    if X.shape[1] != partition.dimension:
        X = _fit_width(X, partition.dimension)
    return nearest_center(X, partition.centers)[0]


def _fit_width(X, d):
    if sparse.issparse(X):
        X = X.tocsc()[:, :d] if X.shape[1] > d else sparse.hstack([X, sparse.csr_matrix((X.shape[0], d - X.shape[1]))])
        return X.tocsr()
    X = np.asarray(X)
    return X[:, :d] if X.shape[1] > d else np.pad(X, ((0, 0), (0, d - X.shape[1])))


def agreement_matrix(a: np.ndarray, b: np.ndarray, size: int | None = None) -> np.ndarray:
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    g = size or int(max(a.max(initial=-1), b.max(initial=-1)) + 1)
    m = np.zeros((g, g), dtype=np.int64)
    np.add.at(m, (a, b), 1)
    return m


def matching_distance_labels(a, b, num_clusters: int | None = None) -> float:
    """Fraction of points on which two labelings disagree under the best relabeling."""
    a = np.asarray(a)
    if a.size == 0:
        raise ArgumentError("empty evaluation set")
    m = agreement_matrix(a, b, num_clusters)
    rows, cols = linear_sum_assignment(m, maximize=True)
    agree = int(m[rows, cols].sum())
    return (a.size - agree) / a.size


def matching_distance_bruteforce(a, b, num_clusters: int | None = None) -> float:
    """Enumerates every relabeling; only sensible for a handful of clusters."""
    a = np.asarray(a)
    if a.size == 0:
        raise ArgumentError("empty evaluation set")
    m = agreement_matrix(a, b, num_clusters)
    g = m.shape[0]
    best = max(sum(int(m[perm[j], j]) for j in range(g)) for perm in itertools.permutations(range(g)))
    return (a.size - best) / a.size


def minimal_matching_distance(a: Partition, b: Partition, eval_set) -> float:
    X = as_matrix(eval_set, max(a.dimension, b.dimension))
    if X.shape[0] == 0:
        raise ArgumentError("empty evaluation set")
    g = max(a.num_clusters, b.num_clusters)
    return matching_distance_labels(assign_many(a, X), assign_many(b, X), g)


def _fit_rows(cfg, X, rows):
    return cfg.fit(X[rows])


def _trial_rngs(seed: int, trials: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(trials)]


def bounded_difference_deltas(cfg, pool, sample_size: int, eval_size: int, trials: int, seed: int) -> np.ndarray:
    """Per-trial matching distance between fits on sets differing in one point."""
    X = as_matrix(pool)
    total = X.shape[0]
    if trials < 1:
        raise ArgumentError("trials must be >= 1")
    if sample_size < 1 or eval_size < 1 or total < sample_size + eval_size + 1:
        raise ArgumentError(f"pool of {total} too small for sample {sample_size} + eval {eval_size} + 1")
    deltas = np.empty(trials)
    for t, rng in enumerate(_trial_rngs(seed, trials)):
        perm = rng.permutation(total)
        z = np.sort(perm[:sample_size])
        fresh = perm[sample_size]
        ev = np.sort(perm[sample_size + 1 : sample_size + 1 + eval_size])
        z2 = z.copy()
        z2[int(rng.integers(sample_size))] = fresh
        pa, pb = _fit_rows(cfg, X, z), _fit_rows(cfg, X, z2)
        deltas[t] = minimal_matching_distance(pa, pb, X[ev])
    return deltas


def estimate_bounded_difference(cfg, pool, sample_size: int, eval_size: int, trials: int, seed: int) -> float:
    """Empirical bounded-difference constant: ``sample_size`` times the mean one-swap distance."""
    return float(sample_size * bounded_difference_deltas(cfg, pool, sample_size, eval_size, trials, seed).mean())


@dataclass(frozen=True, eq=False)
class StabilityEstimate:
    L_hat: float
    delta_hat: float
    trials: int
    reference: Partition = field(repr=False)
    deltas: tuple = ()

    def to_json(self) -> dict:
        return {"L_hat": self.L_hat, "delta_hat": self.delta_hat, "trials": self.trials}


def estimate_stability(
    cfg,
    pool,
    sample_size: int,
    eval_set,
    trials: int,
    seed: int,
    L_hat: float | None = None,
) -> StabilityEstimate:
    """Mean distance between fits on random subsets and the full-pool fit.

    The full-pool fit stands in for the (uncomputable) limit clustering.
    When ``L_hat`` is not supplied it is estimated on the same pool with
    half-size samples.
    """
    X = as_matrix(pool)
    total = X.shape[0]
    if trials < 1:
        raise ArgumentError("trials must be >= 1")
    if not 1 <= sample_size <= total:
        raise ArgumentError(f"sample_size {sample_size} outside [1, {total}]")
    E = as_matrix(eval_set, X.shape[1])
    reference = cfg.fit(X)
    deltas = np.empty(trials)
    for t, rng in enumerate(_trial_rngs(seed, trials)):
        z = np.sort(rng.choice(total, size=sample_size, replace=False))
        deltas[t] = minimal_matching_distance(_fit_rows(cfg, X, z), reference, E)
    if L_hat is None:
        half = max(1, total // 2)
        ev = total - half - 1
        L_hat = estimate_bounded_difference(cfg, X, half, ev, trials, seed) if ev >= 1 else 0.0
    return StabilityEstimate(float(L_hat), float(deltas.mean()), trials, reference, tuple(deltas.tolist()))
