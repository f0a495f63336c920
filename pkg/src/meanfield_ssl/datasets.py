"""Benchmark datasets, CSV ingestion and stratified labeled-subset sampling.

Class labels are stored as integers ``1..q``; node indices are ordinary
0-based array positions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import gammaln, logsumexp

from .exceptions import (
    DatasetFormatError,
    InfeasibleStratificationError,
    InvalidArgumentError,
    NonNumericFeatureError,
    TooFewClassesError,
)

__all__ = [
    "Dataset",
    "LabeledSplit",
    "make_rng",
    "gen_two_moons",
    "gen_three_clusters",
    "gen_five_gaussians",
    "load_csv",
    "save_csv",
    "n_labeled_for",
    "sample_labeled",
    "GENERATORS",
]


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator; ``seed`` may be an int, a sequence of ints or a SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix with ground-truth labels in ``1..q``."""

    features: np.ndarray
    labels: np.ndarray
    name: str = "dataset"
    q: int = field(init=False)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels)
        if X.ndim != 2 or X.shape[1] < 1:
            raise InvalidArgumentError(f"features must be a 2-D array with n >= 1, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise InvalidArgumentError("labels must be a vector with one entry per row of features")
        if not np.all(np.isfinite(X)):
            raise InvalidArgumentError("features contain non-finite values")
        if not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise InvalidArgumentError("labels must be integers")
        y = y.astype(np.int64)
        q = int(y.max()) if y.size else 0
        if q < 2 or y.min() < 1:
            raise TooFewClassesError(f"labels must lie in 1..q with q >= 2, got range [{y.min() if y.size else None}, {q}]")
        present = np.bincount(y, minlength=q + 1)[1:]
        if np.any(present == 0):
            missing = (np.flatnonzero(present == 0) + 1).tolist()
            raise InvalidArgumentError(f"class ids {missing} never appear; labels must cover 1..q")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "labels", _frozen(y))
        object.__setattr__(self, "q", q)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def class_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.q + 1)[1:]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.name == other.name
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class LabeledSplit:
    """Partition of the nodes into labeled (sorted indices) and unlabeled."""

    labeled_indices: np.ndarray
    r_l: float
    seed: object = None
    n_samples: int | None = None

    def __post_init__(self):
        idx = np.asarray(self.labeled_indices, dtype=np.int64)
        if idx.ndim != 1:
            raise InvalidArgumentError("labeled_indices must be 1-D")
        if np.unique(idx).size != idx.size:
            raise InvalidArgumentError("labeled_indices contain duplicates")
        if idx.size and idx.min() < 0:
            raise InvalidArgumentError("labeled_indices must be non-negative")
        if self.n_samples is not None and idx.size and idx.max() >= self.n_samples:
            raise InvalidArgumentError("labeled index out of range")
        if not 0.0 < self.r_l <= 1.0:
            raise InvalidArgumentError(f"r_l must lie in (0, 1], got {self.r_l}")
        object.__setattr__(self, "labeled_indices", _frozen(np.sort(idx)))

    def mask(self, n_samples: int | None = None) -> np.ndarray:
        n = n_samples if n_samples is not None else self.n_samples
        if n is None:
            raise InvalidArgumentError("n_samples unknown for this split")
        m = np.zeros(n, dtype=bool)
        m[self.labeled_indices] = True
        return m

    def unlabeled_indices(self, n_samples: int | None = None) -> np.ndarray:
        return np.flatnonzero(~self.mask(n_samples))


def _class_sizes(count: int, proportions) -> np.ndarray:
    # round each share, keep every class non-empty, absorb the rounding slack in the largest class
    p = np.asarray(proportions, dtype=float)
    sizes = np.maximum(1, np.floor(p * count + 0.5).astype(np.int64))
    sizes[int(np.argmax(p))] += count - int(sizes.sum())
    if sizes.min() < 1:
        raise InvalidArgumentError(f"count={count} is too small for {len(p)} classes")
    return sizes


def gen_two_moons(count: int = 1000, noise_std: float = 0.1, seed=0) -> Dataset:
    """Two interleaving half circles with ``count // 2`` points each.

    The upper arc is the unit half circle; the lower arc is its mirror image
    shifted to center ``(1, 0.5)``.
    """
    if not isinstance(count, (int, np.integer)) or count < 2 or count % 2:
        raise InvalidArgumentError(f"count must be a positive even integer, got {count!r}")
    if noise_std < 0:
        raise InvalidArgumentError("noise_std must be non-negative")
    rng = make_rng(seed)
    half = count // 2
    t = np.linspace(0.0, np.pi, half)
    upper = np.column_stack([np.cos(t), np.sin(t)])
    lower = np.column_stack([1.0 - np.cos(t), 1.0 - np.sin(t) - 0.5])
    X = np.vstack([upper, lower])
    if noise_std > 0:
        X = X + rng.normal(scale=noise_std, size=X.shape)
    y = np.repeat([1, 2], half)
    return Dataset(X, y, name="two_moons")


def gen_three_clusters(count: int = 900, seed=0, noise_std: float = 0.1) -> Dataset:
    """Two concentric open arcs wrapped around a Gaussian blob (sizes 4:3:2)."""
    if not isinstance(count, (int, np.integer)) or count < 3:
        raise InvalidArgumentError(f"count must be an integer >= 3, got {count!r}")
    rng = make_rng(seed)
    n_inner, n_outer, n_blob = _class_sizes(count, [4 / 9, 3 / 9, 2 / 9])
    # arcs leave a gap on the right so neither class is convex
    t_inner = rng.uniform(0.25 * np.pi, 1.75 * np.pi, n_inner)
    t_outer = rng.uniform(0.25 * np.pi, 1.75 * np.pi, n_outer)
    inner = 2.0 * np.column_stack([np.cos(t_inner), np.sin(t_inner)])
    outer = 3.5 * np.column_stack([np.cos(t_outer), np.sin(t_outer)])
    inner += rng.normal(scale=noise_std, size=inner.shape)
    outer += rng.normal(scale=noise_std, size=outer.shape)
    blob = rng.normal(scale=0.35, size=(n_blob, 2))
    X = np.vstack([inner, outer, blob])
    y = np.repeat([1, 2, 3], [n_inner, n_outer, n_blob])
    return Dataset(X, y, name="three_clusters")


FIVE_GAUSSIAN_STDS = (0.4, 0.6, 0.8, 1.0, 1.2)
FIVE_GAUSSIAN_PROPORTIONS = (0.30, 0.25, 0.20, 0.15, 0.10)


def five_gaussian_means(radius: float = 5.0) -> np.ndarray:
    angles = np.pi / 2 + 2 * np.pi * np.arange(5) / 5
    return radius * np.column_stack([np.cos(angles), np.sin(angles)])


def gen_five_gaussians(count: int = 1000, seed=0, std_scale: float = 1.0) -> Dataset:
    """Five isotropic blobs on a pentagon with distinct spreads and sizes.

    ``std_scale`` multiplies every blob's standard deviation; 0 puts each
    point exactly on its blob mean.
    """
    if not isinstance(count, (int, np.integer)) or count < 5:
        raise InvalidArgumentError(f"count must be an integer >= 5, got {count!r}")
    if std_scale < 0:
        raise InvalidArgumentError("std_scale must be non-negative")
    rng = make_rng(seed)
    sizes = _class_sizes(count, FIVE_GAUSSIAN_PROPORTIONS)
    means = five_gaussian_means()
    blocks = [
        mu + std_scale * s * rng.standard_normal((n, 2))
        for mu, s, n in zip(means, FIVE_GAUSSIAN_STDS, sizes)
    ]
    y = np.repeat(np.arange(1, 6), sizes)
    return Dataset(np.vstack(blocks), y, name="five_gaussians")


GENERATORS = {
    "two_moons": gen_two_moons,
    "three_clusters": gen_three_clusters,
    "five_gaussians": gen_five_gaussians,
}


def load_csv(path, label_column=-1, name: str | None = None) -> Dataset:
    """Read a numeric CSV with a header row.

    ``label_column`` is a header name or a column position. Labels are
    re-encoded to ``1..q`` in sorted order of their original values (numeric
    order when every label parses as a number); all other columns are
    features.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such dataset file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DatasetFormatError(f"{path} is empty")
    header, body = [h.strip() for h in rows[0]], rows[1:]
    if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        if label_column not in header:
            raise DatasetFormatError(f"label column {label_column!r} not in header {header}")
        col = header.index(label_column)
    else:
        col = int(label_column)
        if not -len(header) <= col < len(header):
            raise DatasetFormatError(f"label column index {col} out of range")
        col %= len(header)
    if not body:
        raise TooFewClassesError(f"{path} has no data rows")

    raw_labels, feats = [], []
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DatasetFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        raw_labels.append(row[col].strip())
        try:
            values = [float(c) for j, c in enumerate(row) if j != col]
        except ValueError as exc:
            raise NonNumericFeatureError(f"{path}:{lineno}: {exc}") from None
        if not all(math.isfinite(v) for v in values):
            raise NonNumericFeatureError(f"{path}:{lineno}: non-finite feature value")
        feats.append(values)

    distinct = set(raw_labels)
    if len(distinct) < 2:
        raise TooFewClassesError(f"{path}: need at least two classes, found {len(distinct)}")
    try:
        order = sorted(distinct, key=float)
    except ValueError:
        order = sorted(distinct)
    code = {lab: i + 1 for i, lab in enumerate(order)}
    y = np.array([code[lab] for lab in raw_labels], dtype=np.int64)
    return Dataset(np.array(feats, dtype=np.float64), y, name=name or path.stem)


def save_csv(ds: Dataset, path, label_column: str = "label") -> Path:
    """Write ``ds`` as CSV: feature columns ``x0..x{n-1}`` then the label column."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j}" for j in range(ds.n_features)] + [label_column])
        for xi, yi in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in xi] + [int(yi)])
    return path


def n_labeled_for(n_samples: int, r_l: float) -> int:
    """``round(r_l * N)`` with halves rounded up."""
    return int(math.floor(r_l * n_samples + 0.5))


def _log_comb(n: int, k: np.ndarray) -> np.ndarray:
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def _draw_class_counts(sizes: np.ndarray, total: int, rng: np.random.Generator) -> np.ndarray:
    """Per-class label counts with P(c) proportional to prod_i C(n_i, c_i), all c_i >= 1."""
    q = sizes.size
    # log_ways[i][m]: log #ways to pick m items from classes i.. with each >= 1
    log_ways = np.full((q + 1, total + 1), -np.inf)
    log_ways[q, 0] = 0.0
    m = np.arange(total + 1)
    for i in range(q - 1, -1, -1):
        c = np.arange(1, min(sizes[i], total) + 1)
        # rows: remaining m, cols: c taken from class i
        rest = m[:, None] - c[None, :]
        tail = np.where(rest >= 0, log_ways[i + 1][np.clip(rest, 0, None)], -np.inf)
        log_ways[i] = logsumexp(_log_comb(int(sizes[i]), c)[None, :] + tail, axis=1)
    counts = np.zeros(q, dtype=np.int64)
    remaining = total
    for i in range(q):
        c = np.arange(1, min(sizes[i], remaining) + 1)
        rest = remaining - c
        logp = _log_comb(int(sizes[i]), c) + log_ways[i + 1][rest] - log_ways[i][remaining]
        p = np.exp(logp - logp.max())
        counts[i] = rng.choice(c, p=p / p.sum())
        remaining -= counts[i]
    return counts


def sample_labeled(ds: Dataset, r_l: float, seed=0) -> LabeledSplit:
    """Draw ``round(r_l * N)`` labeled nodes, uniformly among subsets that hit every class.

    Sampling is exact: class counts come from their conditional distribution,
    then members are drawn uniformly within each class.
    """
    if not 0.0 < r_l <= 1.0:
        raise InvalidArgumentError(f"r_l must lie in (0, 1], got {r_l}")
    n = ds.n_samples
    n_l = n_labeled_for(n, r_l)
    if n_l < ds.q:
        raise InfeasibleStratificationError(
            f"round(r_l*N) = {n_l} labeled slots cannot cover q = {ds.q} classes"
        )
    if n_l >= n:
        return LabeledSplit(np.arange(n), r_l, seed, n)
    rng = make_rng(seed)
    sizes = ds.class_sizes()
    counts = _draw_class_counts(sizes, n_l, rng)
    chosen = []
    for cls, c in enumerate(counts, start=1):
        members = np.flatnonzero(ds.labels == cls)
        chosen.append(rng.choice(members, size=int(c), replace=False))
    return LabeledSplit(np.concatenate(chosen), r_l, seed, n)
