"""Margins, the rho-margin loss and the penalized empirical risk with its subgradient."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse

from .errors import ArgumentError, ConfigurationError


def margin(scores, y: int) -> float:
    """Score of ``y`` minus the best competing score."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size < 2 or not 0 <= y < s.size:
        raise ArgumentError(f"class {y} out of range for {s.size} scores")
    return float(s[y] - np.max(np.delete(s, y)))


def unlabeled_margin(scores, predominant) -> float:
    """Best score inside ``predominant`` minus the best score outside it."""
    s = np.asarray(scores, dtype=np.float64)
    inside = np.zeros(s.size, dtype=bool)
    inside[list(predominant)] = True
    if not inside.any() or inside.all():
        raise ArgumentError("predominant set must be a non-empty strict subset of the classes")
    return float(s[inside].max() - s[~inside].max())


def phi_rho(z, rho: float):
    """Ramp loss: 1 for z <= 0, 1 - z/rho in between, 0 for z >= rho. Works elementwise."""
    if not rho > 0:
        raise ArgumentError("rho must be > 0")
    out = np.clip(1.0 - np.asarray(z, dtype=np.float64) / rho, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def _top_other(S: np.ndarray, exclude: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Max and argmax of each row of ``S`` over columns where ``exclude`` is False."""
    masked = np.where(exclude, -np.inf, S)
    arg = np.argmax(masked, axis=1)
    return masked[np.arange(S.shape[0]), arg], arg


def margins(S: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise margins and the competing class (lowest index on ties)."""
    n, k = S.shape
    own = np.zeros((n, k), dtype=bool)
    own[np.arange(n), y] = True
    best, rival = _top_other(S, own)
    return S[np.arange(n), y] - best, rival


def unlabeled_margins(S: np.ndarray, inside: np.ndarray):
    """Row-wise unlabeled margins plus the best inside and best outside classes."""
    top_in, arg_in = _top_other(S, ~inside)
    top_out, arg_out = _top_other(S, inside)
    return top_in - top_out, arg_in, arg_out


def _weights(model) -> np.ndarray:
    return np.asarray(getattr(model, "weights", model), dtype=np.float64)


@dataclass(frozen=True, eq=False)
class Batch:
    """Training data arranged for repeated risk / subgradient evaluation.

    ``X_pen`` holds only the unlabeled rows that fall in confident clusters;
    ``inside`` marks their clusters' predominant classes.
    """

    X_lab: object
    y: np.ndarray
    lab_cluster: np.ndarray
    X_pen: object
    inside: np.ndarray
    pen_cluster: np.ndarray
    u: int
    num_classes: int
    confident_ids: tuple = ()

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def dimension(self) -> int:
        return self.X_lab.shape[1]

    def supervised(self) -> "Batch":
        d = self.dimension
        return Batch(
            self.X_lab, self.y, self.lab_cluster, _empty_like(self.X_lab, d), np.zeros((0, self.num_classes), bool),
            np.zeros(0, np.int64), self.u, self.num_classes, (),
        )

    def subset(self, rows) -> "Batch":
        """Restrict the labeled part to ``rows``; the penalty part is kept whole."""
        rows = np.asarray(rows)
        return Batch(
            self.X_lab[rows], self.y[rows], self.lab_cluster[rows], self.X_pen, self.inside,
            self.pen_cluster, self.u, self.num_classes, self.confident_ids,
        )


def _empty_like(X, d):
    return sparse.csr_matrix((0, d)) if sparse.issparse(X) else np.zeros((0, d))


def make_batch(labeled, unlabeled, partition, confident, num_classes: int, dimension: int) -> Batch:
    """Arrange labeled/unlabeled Samples with their cluster memberships.

    Unlabeled memberships come from ``partition.assign`` when the partition
    was fit on this unlabeled set, otherwise from nearest-center assignment.
    """
    from .clustering import assign_many
    from .data import densify_if_small, labels_of, to_matrix

    if not labeled:
        raise ArgumentError("labeled set is empty")
    X_lab = densify_if_small(to_matrix(labeled, dimension))
    y = labels_of(labeled)
    X_unl = densify_if_small(to_matrix(unlabeled, dimension))
    if partition is None:
        lab_cluster = np.full(y.size, -1)
        unl_cluster = np.full(len(unlabeled), -1)
    else:
        lab_cluster = assign_many(partition, X_lab)
        if partition.assign.size == len(unlabeled):
            unl_cluster = partition.assign
        else:
            unl_cluster = assign_many(partition, X_unl) if len(unlabeled) else np.zeros(0, np.int64)
    ids = tuple(confident.ids) if confident is not None else ()
    pen_rows = np.flatnonzero(np.isin(unl_cluster, ids))
    inside = np.zeros((pen_rows.size, num_classes), dtype=bool)
    if pen_rows.size:
        table = confident.by_id()
        for r, i in enumerate(pen_rows):
            inside[r, list(table[int(unl_cluster[i])].predominant)] = True
    return Batch(X_lab, y, lab_cluster, X_unl[pen_rows], inside, unl_cluster[pen_rows], len(unlabeled), num_classes, ids)


@dataclass(frozen=True)
class RiskBreakdown:
    labeled_term: float
    penalty_term: float
    total: float
    per_cluster: dict = field(default_factory=dict)
    per_cluster_labeled: dict = field(default_factory=dict)
    per_cluster_unlabeled: dict = field(default_factory=dict)
    outside_labeled: float = 0.0

    def to_json(self) -> dict:
        return {
            "labeled_term": self.labeled_term,
            "penalty_term": self.penalty_term,
            "total": self.total,
            "per_cluster": {str(k): v for k, v in self.per_cluster.items()},
            "per_cluster_labeled": {str(k): v for k, v in self.per_cluster_labeled.items()},
            "per_cluster_unlabeled": {str(k): v for k, v in self.per_cluster_unlabeled.items()},
            "outside_labeled": self.outside_labeled,
        }


def _scores(X, W):
    return np.asarray(X @ W.T)


def risk(W, batch: Batch, rho: float) -> RiskBreakdown:
    W = _weights(W)
    if W.shape != (batch.num_classes, batch.dimension):
        raise ConfigurationError(f"weights {W.shape} do not match ({batch.num_classes}, {batch.dimension})")
    m, _ = margins(_scores(batch.X_lab, W), batch.y)
    lab_loss = np.atleast_1d(phi_rho(m, rho))
    labeled_term = math.fsum(lab_loss) / batch.n
    if batch.inside.shape[0]:
        mu, _, _ = unlabeled_margins(_scores(batch.X_pen, W), batch.inside)
        pen_loss = np.atleast_1d(phi_rho(mu, rho))
    else:
        pen_loss = np.zeros(0)
    penalty_term = math.fsum(pen_loss) / batch.u if batch.u else 0.0
    per_lab, per_unl, per = {}, {}, {}
    for j in batch.confident_ids:
        per_lab[j] = math.fsum(lab_loss[batch.lab_cluster == j]) / batch.n
        per_unl[j] = math.fsum(pen_loss[batch.pen_cluster == j]) / batch.u if batch.u else 0.0
        per[j] = per_lab[j] + per_unl[j]
    outside = ~np.isin(batch.lab_cluster, batch.confident_ids)
    return RiskBreakdown(
        labeled_term,
        penalty_term,
        labeled_term + penalty_term,
        per,
        per_lab,
        per_unl,
        math.fsum(lab_loss[outside]) / batch.n,
    )


def _accumulate(X, rows, plus, minus, coef, k):
    C = np.zeros((X.shape[0], k))
    # each row appears once and plus != minus, so plain fancy indexing is safe
    C[rows, plus] += coef
    C[rows, minus] -= coef
    return np.asarray((X.T @ C).T)


def _band(m, rho, surrogate):
    if surrogate == "ramp":
        return np.flatnonzero((m >= 0) & (m <= rho))
    if surrogate == "hinge":
        return np.flatnonzero(m <= rho)
    raise ArgumentError(f"unknown surrogate {surrogate!r}")


def value_and_subgradient(W, batch: Batch, rho: float, surrogate: str = "ramp"):
    """``(labeled_term, penalty_term, direction)`` from one pass over the scores.

    With ``surrogate="ramp"`` the direction is a subgradient of the penalized
    risk itself, kinks taking the sloped branch. ``"hinge"`` instead uses the
    convex upper bound max(0, 1 - m/rho), which keeps pushing on points whose
    margin is already negative.
    """
    W = _weights(W)
    k = batch.num_classes
    m, rival = margins(_scores(batch.X_lab, W), batch.y)
    labeled = math.fsum(np.atleast_1d(phi_rho(m, rho))) / batch.n
    act = _band(m, rho, surrogate)
    g = _accumulate(batch.X_lab, act, rival[act], batch.y[act], 1.0 / (batch.n * rho), k)
    penalty = 0.0
    if batch.inside.shape[0]:
        mu, best_in, best_out = unlabeled_margins(_scores(batch.X_pen, W), batch.inside)
        penalty = math.fsum(np.atleast_1d(phi_rho(mu, rho))) / batch.u
        act = _band(mu, rho, surrogate)
        g = g + _accumulate(batch.X_pen, act, best_out[act], best_in[act], 1.0 / (batch.u * rho), k)
    return labeled, penalty, g


def batch_subgradient(W, batch: Batch, rho: float) -> np.ndarray:
    """A subgradient of the penalized risk; kinks take the sloped branch."""
    return value_and_subgradient(W, batch, rho)[2]


def penalized_risk(model, labeled, unlabeled, partition, confident, rho: float, num_classes=None) -> RiskBreakdown:
    """Labeled ramp loss over ``labeled`` plus the confident-cluster penalty over ``unlabeled``."""
    W = _weights(model)
    if not labeled:
        raise ArgumentError("labeled set is empty")
    batch = make_batch(labeled, unlabeled, partition, confident, num_classes or W.shape[0], W.shape[1])
    return risk(W, batch, rho)


def subgradient(model, labeled, unlabeled, partition, confident, rho: float) -> np.ndarray:
    W = _weights(model)
    if not rho > 0:
        raise ArgumentError("rho must be > 0")
    batch = make_batch(labeled, unlabeled, partition, confident, W.shape[0], W.shape[1])
    return batch_subgradient(W, batch, rho)
