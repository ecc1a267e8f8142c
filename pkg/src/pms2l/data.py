"""Sparse samples, datasets, LIBSVM I/O, stratified splits and synthetic blobs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .errors import ArgumentError, DataError, ParseError, SplitError


@dataclass(frozen=True, eq=False)
class Sample:
    """A sparse feature vector with an optional 0-based class index.

    ``indices`` must be strictly increasing; ``values`` must be finite.
    """

    indices: np.ndarray
    values: np.ndarray
    label: int | None = None

    def __post_init__(self):
        idx = np.array(self.indices, dtype=np.int64).reshape(-1)
        val = np.array(self.values, dtype=np.float64).reshape(-1)
        if idx.shape != val.shape:
            raise DataError("indices and values differ in length")
        if idx.size and (idx[0] < 0 or np.any(np.diff(idx) <= 0)):
            raise DataError("feature indices must be non-negative and strictly increasing")
        if not np.all(np.isfinite(val)):
            raise DataError("non-finite feature value")
        idx.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)
        if self.label is not None:
            object.__setattr__(self, "label", int(self.label))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, float]], label: int | None = None) -> "Sample":
        pairs = list(pairs)
        return cls([p[0] for p in pairs], [p[1] for p in pairs], label)

    @classmethod
    def from_dense(cls, x, label=None) -> "Sample":
        x = np.asarray(x, dtype=np.float64)
        nz = np.flatnonzero(x)
        return cls(nz, x[nz], label)

    @property
    def features(self) -> list[tuple[int, float]]:
        return list(zip(self.indices.tolist(), self.values.tolist()))

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.values, self.values)))

    def dense(self, dimension: int) -> np.ndarray:
        out = np.zeros(dimension)
        keep = self.indices < dimension
        out[self.indices[keep]] = self.values[keep]
        return out

    def with_label(self, label: int | None) -> "Sample":
        return Sample(self.indices, self.values, label)

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.label == other.label
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    def __repr__(self):
        return f"Sample(label={self.label}, features={self.features})"


def to_matrix(samples: Sequence[Sample], dimension: int) -> sparse.csr_matrix:
    """Stack samples into an ``len(samples) x dimension`` CSR matrix."""
    indptr = np.zeros(len(samples) + 1, dtype=np.int64)
    for i, s in enumerate(samples):
        indptr[i + 1] = indptr[i] + s.indices.size
    if len(samples):
        indices = np.concatenate([s.indices for s in samples])
        data = np.concatenate([s.values for s in samples])
    else:
        indices = np.zeros(0, dtype=np.int64)
        data = np.zeros(0)
    keep = indices < dimension
    if not keep.all():
        # indices beyond the model dimension contribute nothing
        rows = np.repeat(np.arange(len(samples)), np.diff(indptr))
        m = sparse.csr_matrix((data[keep], (rows[keep], indices[keep])), shape=(len(samples), dimension))
        return m
    return sparse.csr_matrix((data, indices, indptr), shape=(len(samples), dimension))


def densify_if_small(X, limit: int = 5_000_000):
    """Dense copy of a sparse matrix when it has at most ``limit`` cells."""
    if sparse.issparse(X):
        return X.toarray() if X.shape[0] * X.shape[1] <= limit else X.tocsr()
    return np.asarray(X, dtype=np.float64)


def labels_of(samples: Sequence[Sample]) -> np.ndarray:
    return np.array([s.label for s in samples], dtype=np.int64)


@dataclass(frozen=True)
class LabeledPool:
    """Labeled samples sharing one label encoding, e.g. the contents of one file."""

    samples: tuple
    num_classes: int
    dimension: int
    label_values: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if not self.label_values:
            object.__setattr__(self, "label_values", tuple(range(self.num_classes)))

    def __len__(self):
        return len(self.samples)

    @property
    def labels(self) -> np.ndarray:
        return labels_of(self.samples)


@dataclass(frozen=True)
class Dataset:
    labeled: tuple
    unlabeled: tuple
    test: tuple
    num_classes: int
    dimension: int
    feature_radius: float = field(init=False)

    def __post_init__(self):
        for name in ("labeled", "unlabeled", "test"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.num_classes < 2:
            raise DataError("need at least two classes")
        if not self.labeled:
            raise DataError("labeled set is empty")
        for s in self.labeled + self.test:
            if s.label is None or not 0 <= s.label < self.num_classes:
                raise DataError(f"labeled/test sample has invalid label {s.label}")
        if any(s.label is not None for s in self.unlabeled):
            raise DataError("unlabeled sample carries a label")
        radius = max((s.norm for s in self.labeled + self.unlabeled), default=0.0)
        object.__setattr__(self, "feature_radius", radius)

    @property
    def n(self) -> int:
        return len(self.labeled)

    @property
    def u(self) -> int:
        return len(self.unlabeled)

    def manifest(self) -> dict:
        return {
            "n": self.n,
            "u": self.u,
            "test": len(self.test),
            "K": self.num_classes,
            "d": self.dimension,
            "feature_radius": self.feature_radius,
        }


def _parse_label(token: str, lineno: int):
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"bad label {token!r}", lineno) from None
    if not math.isfinite(value):
        raise DataError(f"line {lineno}: non-finite label")
    return int(value) if value.is_integer() else value


def parse_libsvm_lines(lines: Iterable[str]):
    """Yield ``(original_label, indices, values)`` per non-blank line, indices 0-based."""
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *tokens = line.split()
        label = _parse_label(head, lineno)
        idx = np.empty(len(tokens), dtype=np.int64)
        val = np.empty(len(tokens))
        for j, tok in enumerate(tokens):
            key, sep, v = tok.partition(":")
            if not sep:
                raise ParseError(f"expected index:value, got {tok!r}", lineno)
            try:
                idx[j] = int(key)
                val[j] = float(v)
            except ValueError:
                raise ParseError(f"bad feature {tok!r}", lineno) from None
            if idx[j] < 1:
                raise ParseError(f"feature index {idx[j]} < 1", lineno)
            if not math.isfinite(val[j]):
                raise DataError(f"line {lineno}: non-finite value in {tok!r}")
            if j and idx[j] <= idx[j - 1]:
                raise ParseError("feature indices not strictly increasing", lineno)
        yield label, idx - 1, val


def load_libsvm(path, num_classes: int | None = None, label_values: Sequence | None = None) -> LabeledPool:
    """Read a LIBSVM file, remapping labels to ``0..K-1`` by ascending value.

    Pass ``label_values`` (e.g. the training file's) to share an encoding
    between files.
    """
    with open(path) as fh:
        rows = list(parse_libsvm_lines(fh))
    if label_values is None:
        label_values = sorted({r[0] for r in rows})
    label_values = tuple(label_values)
    mapping = {v: k for k, v in enumerate(label_values)}
    k = len(label_values) if num_classes is None else int(num_classes)
    if k < len(label_values):
        raise DataError(f"file has {len(label_values)} labels but num_classes={k}")
    samples = []
    dim = 0
    for label, idx, val in rows:
        if label not in mapping:
            raise DataError(f"label {label!r} not in the label encoding")
        samples.append(Sample(idx, val, mapping[label]))
        if idx.size:
            dim = max(dim, int(idx[-1]) + 1)
    return LabeledPool(tuple(samples), k, dim, label_values + tuple(range(len(label_values), k)))


def _format_value(v) -> str:
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return repr(v) if isinstance(v, float) else str(v)


def write_libsvm(path, samples: Sequence[Sample], label_values: Sequence | None = None) -> None:
    """Write labeled samples in LIBSVM format with full float precision."""
    lines = []
    for i, s in enumerate(samples):
        if s.label is None:
            raise DataError(f"sample {i} has no label; LIBSVM lines need one")
        label = label_values[s.label] if label_values is not None else s.label
        feats = " ".join(f"{j + 1}:{float(v)!r}" for j, v in zip(s.indices.tolist(), s.values.tolist()))
        lines.append(f"{_format_value(label)} {feats}".rstrip() + "\n")
    Path(path).write_text("".join(lines))


@dataclass(frozen=True)
class SplitSpec:
    labeled_fraction: float
    per_class_minimum: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.labeled_fraction <= 1:
            raise ArgumentError("labeled_fraction must lie in (0, 1]")
        if self.per_class_minimum < 1:
            raise ArgumentError("per_class_minimum must be >= 1")

    def labeled_size(self, pool_size: int) -> int:
        # guard against 0.05 * 420 = 21.000000000000004
        return min(pool_size, math.ceil(self.labeled_fraction * pool_size - 1e-9))


def split_indices(labels: np.ndarray, num_classes: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Stratified labeled/unlabeled index split of a labeled pool.

    Every class first receives ``per_class_minimum`` labeled slots; the
    rest of the budget is spread proportionally to the remaining class
    sizes by largest remainder (ties to the lower class).
    """
    labels = np.asarray(labels, dtype=np.int64)
    total = labels.size
    if total == 0:
        raise ArgumentError("cannot split an empty pool")
    m = spec.labeled_size(total)
    counts = np.bincount(labels, minlength=num_classes)
    for k in range(num_classes):
        if counts[k] < spec.per_class_minimum:
            raise SplitError(
                f"class {k} has {counts[k]} examples, fewer than per_class_minimum={spec.per_class_minimum}"
            )
    if m < spec.per_class_minimum * num_classes:
        raise SplitError(
            f"labeled budget {m} cannot hold {spec.per_class_minimum} examples for each of {num_classes} classes"
        )
    alloc = np.full(num_classes, spec.per_class_minimum, dtype=np.int64)
    spare = counts - alloc
    rest = m - alloc.sum()
    if rest > 0:
        quota = rest * spare / spare.sum()
        extra = np.floor(quota).astype(np.int64)
        remainder = quota - extra
        order = sorted(range(num_classes), key=lambda k: (-remainder[k], k))
        for k in order[: rest - extra.sum()]:
            extra[k] += 1
        alloc += extra
    rng = np.random.default_rng(spec.seed)
    chosen = []
    for k in range(num_classes):
        members = np.flatnonzero(labels == k)
        chosen.append(rng.choice(members, size=alloc[k], replace=False))
    labeled_idx = np.sort(np.concatenate(chosen))
    mask = np.ones(total, dtype=bool)
    mask[labeled_idx] = False
    return labeled_idx, np.flatnonzero(mask)


def split(pool: LabeledPool, spec: SplitSpec) -> tuple[list[Sample], list[Sample]]:
    """Return ``(labeled, unlabeled)``; unlabeled samples have their labels stripped."""
    lab, unl = split_indices(pool.labels, pool.num_classes, spec)
    labeled = [pool.samples[i] for i in lab]
    unlabeled = [pool.samples[i].with_label(None) for i in unl]
    return labeled, unlabeled


def l2_normalize(ds: Dataset) -> Dataset:
    """Scale every sample (labeled, unlabeled and test) to unit Euclidean norm."""

    def scaled(name, samples):
        out = []
        for i, s in enumerate(samples):
            nrm = s.norm
            if nrm == 0:
                raise DataError(f"{name} sample {i} has zero norm")
            out.append(Sample(s.indices, s.values / nrm, s.label))
        return out

    return Dataset(
        scaled("labeled", ds.labeled),
        scaled("unlabeled", ds.unlabeled),
        scaled("test", ds.test),
        ds.num_classes,
        ds.dimension,
    )


def blob_centers(num_classes: int, separation: float, seed: int) -> np.ndarray:
    """2-D centers on a circle about the origin, neighbours exactly ``separation`` apart.

    A seeded random rotation varies the geometry. Centring on the origin keeps
    the classes separable by a linear scorer without a bias term.
    """
    rng = np.random.default_rng(seed)
    radius = separation / (2.0 * math.sin(math.pi / num_classes))
    angles = rng.uniform(0.0, 2.0 * math.pi) + 2.0 * math.pi * np.arange(num_classes) / num_classes
    return radius * np.column_stack([np.cos(angles), np.sin(angles)])


def make_synthetic_blobs(
    num_classes: int,
    per_class: int,
    separation: float,
    noise: float,
    seed: int,
    centers_seed: int | None = None,
) -> LabeledPool:
    """Isotropic Gaussian blobs in R^2, shuffled, deterministic per seed.

    ``centers_seed`` fixes the geometry independently of the draw, so a
    train and a test pool can share centers.
    """
    if separation <= 0 or noise <= 0:
        raise ArgumentError("separation and noise must be positive")
    if num_classes < 2 or per_class < 0:
        raise ArgumentError("need num_classes >= 2 and per_class >= 0")
    centers = blob_centers(num_classes, separation, seed if centers_seed is None else centers_seed)
    rng = np.random.default_rng([seed, 1])
    labels = np.repeat(np.arange(num_classes), per_class)
    points = centers[labels] + noise * rng.standard_normal((labels.size, 2))
    order = rng.permutation(labels.size)
    samples = tuple(Sample(np.arange(2), points[i], int(labels[i])) for i in order)
    return LabeledPool(samples, num_classes, 2 if per_class else 0)


def build_dataset(
    pool: LabeledPool,
    test: Sequence[Sample],
    spec: SplitSpec,
    normalize: bool = False,
) -> Dataset:
    labeled, unlabeled = split(pool, spec)
    dim = max([pool.dimension] + [int(s.indices[-1]) + 1 for s in test if s.indices.size])
    ds = Dataset(labeled, unlabeled, test, pool.num_classes, dim)
    return l2_normalize(ds) if normalize else ds
