"""Selection of clusters covered by their few predominant labeled classes."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ArgumentError, ConfigurationError


@dataclass(frozen=True)
class ConfidentCluster:
    cluster_id: int
    predominant: tuple
    labeled_count: int
    unlabeled_count: int
    violation_mass: float


@dataclass(frozen=True)
class ConfidentClusterSet:
    clusters: tuple
    kappa: int
    eta: float
    G: int

    @property
    def n_eta(self) -> int:
        return sum(c.labeled_count for c in self.clusters)

    @property
    def u_eta(self) -> int:
        return sum(c.unlabeled_count for c in self.clusters)

    @property
    def ids(self) -> list[int]:
        return [c.cluster_id for c in self.clusters]

    def by_id(self) -> dict:
        return {c.cluster_id: c for c in self.clusters}

    def to_json(self) -> dict:
        return {
            "kappa": self.kappa,
            "eta": self.eta,
            "G": self.G,
            "clusters": [
                {
                    "id": c.cluster_id,
                    "predominant": list(c.predominant),
                    "n_eta_j": c.labeled_count,
                    "u_eta_j": c.unlabeled_count,
                    "violation_mass": c.violation_mass,
                }
                for c in self.clusters
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ConfidentClusterSet":
        clusters = tuple(
            ConfidentCluster(int(c["id"]), tuple(c["predominant"]), int(c["n_eta_j"]), int(c["u_eta_j"]), float(c["violation_mass"]))
            for c in obj["clusters"]
        )
        return cls(clusters, int(obj["kappa"]), float(obj["eta"]), int(obj["G"]))

    @classmethod
    def empty(cls, G: int, kappa: int = 2, eta: float = 1e-3) -> "ConfidentClusterSet":
        return cls((), kappa, eta, G)


def predominant_classes(labels: Sequence[int], kappa: int) -> tuple:
    """The ``kappa`` most frequent labels, most frequent first; ties favour lower labels."""
    labels = [int(y) for y in labels]
    if not labels:
        raise ArgumentError("no labels to rank")
    if kappa < 1:
        raise ArgumentError("kappa must be >= 1")
    counts: dict[int, int] = {}
    for y in labels:
        counts[y] = counts.get(y, 0) + 1
    ranked = sorted(counts, key=lambda y: (-counts[y], y))
    return tuple(ranked[:kappa])


def identify(
    labeled_clusters: np.ndarray,
    labels: np.ndarray,
    unlabeled_clusters: np.ndarray,
    num_clusters: int,
    num_classes: int,
    kappa: int,
    eta: float,
) -> ConfidentClusterSet:
    """Keep the clusters whose labeled mass outside their top-``kappa`` classes is at most ``eta/G``.

    Cluster memberships are given as arrays of cluster ids (one per labeled
    and unlabeled sample). The mass is normalized by the total labeled
    count ``n``. Clusters without labeled examples are never kept.
    """
    if kappa >= num_classes:
        raise ConfigurationError(f"kappa={kappa} leaves no competing class among K={num_classes}")
    if kappa < 1:
        raise ConfigurationError("kappa must be >= 1")
    if eta < 0 or math.isnan(eta):
        raise ArgumentError("eta must be >= 0")
    labeled_clusters = np.asarray(labeled_clusters, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.size
    if n == 0:
        raise ArgumentError("no labeled examples")
    unl_counts = np.bincount(np.asarray(unlabeled_clusters, dtype=np.int64), minlength=num_clusters)
    threshold = eta / num_clusters
    kept = []
    for j in range(num_clusters):
        ys = labels[labeled_clusters == j]
        if ys.size == 0:
            continue
        top = predominant_classes(ys, kappa)
        outside = int(np.count_nonzero(~np.isin(ys, top)))
        mass = outside / n
        if mass <= threshold:
            kept.append(ConfidentCluster(j, top, int(ys.size), int(unl_counts[j]), mass))
    return ConfidentClusterSet(tuple(kept), kappa, float(eta), num_clusters)


def identify_partition(partition, labeled, unlabeled_clusters, num_classes: int, kappa: int, eta: float) -> ConfidentClusterSet:
    """``identify`` with labeled samples placed by the partition's nearest center."""
    from .clustering import assign_many
    from .data import labels_of

    return identify(
        assign_many(partition, labeled),
        labels_of(labeled),
        unlabeled_clusters,
        partition.num_clusters,
        num_classes,
        kappa,
        eta,
    )


def eta_from_stability(L_hat: float, n: int, u: int, delta: float) -> float:
    """Largest confidence level certified by the clustering-stability deviation bound."""
    if not 0 < delta < 1:
        raise ArgumentError("delta must lie in (0, 1)")
    if n < 2 or u < 2 or L_hat < 0:
        raise ArgumentError("need n, u >= 2 and L_hat >= 0")
    log_term = math.log(2 / delta)
    return L_hat / u + L_hat * math.sqrt(log_term / (2 * u)) + math.sqrt(log_term / (2 * n))
