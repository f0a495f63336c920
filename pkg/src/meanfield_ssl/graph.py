"""Sparse kNN similarity graphs.

The pipeline is kNN search, bandwidth tuning, Gaussian RBF weighting,
mutual (min) symmetrization and row normalization, in that order.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import cdist

from .exceptions import DegenerateBandwidthError, InvalidArgumentError

logger = logging.getLogger(__name__)

__all__ = [
    "SimilarityGraph",
    "KNNResult",
    "knn_distances",
    "tune_sigma",
    "rbf_weight",
    "directed_knn_graph",
    "symmetrize_min",
    "row_normalize",
    "build_similarity",
    "default_k",
    "export_edgelist",
    "import_edgelist",
]

_CHUNK = 512


@dataclass(frozen=True)
class KNNResult:
    """``indices[i]`` / ``distances[i]``: the k nearest other nodes of i, ascending."""

    indices: np.ndarray
    distances: np.ndarray

    @property
    def k(self) -> int:
        return self.indices.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.indices.shape[0]


@dataclass(frozen=True)
class SimilarityGraph:
    """Sparse weight matrix plus the construction parameters that produced it."""

    weights: sp.csr_matrix
    sigma: float
    k: int
    normalized: bool = False
    isolated: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def n_nodes(self) -> int:
        return self.weights.shape[0]

    @property
    def n_edges(self) -> int:
        return self.weights.nnz

    def toarray(self) -> np.ndarray:
        return self.weights.toarray()

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.weights.sum(axis=1)).ravel()


def default_k(n_samples: int) -> int:
    """``ceil(log2 N)``, the neighbor count used for the beta studies."""
    return max(1, math.ceil(math.log2(n_samples)))


def _as_features(data) -> np.ndarray:
    X = getattr(data, "features", data)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidArgumentError(f"expected a 2-D feature matrix, got shape {X.shape}")
    return X


def _knn_chunk(X: np.ndarray, start: int, stop: int, k: int):
    d = cdist(X[start:stop], X)
    rows = np.arange(stop - start)
    d[rows, start + rows] = np.inf
    # stable sort keeps ascending index order among equal distances
    order = np.argsort(d, axis=1, kind="stable")[:, :k]
    return order, np.take_along_axis(d, order, axis=1)


def knn_distances(data, k: int, n_jobs: int = 1) -> KNNResult:
    """Exact Euclidean k nearest neighbors of every node, self excluded.

    Ties in distance go to the smaller index. Rows are processed in blocks;
    ``n_jobs`` threads share the blocks and the output does not depend on it.
    """
    X = _as_features(data)
    n = X.shape[0]
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= n - 1:
        raise InvalidArgumentError(f"k must be an integer in [1, N-1] = [1, {n - 1}], got {k!r}")
    bounds = [(s, min(s + _CHUNK, n)) for s in range(0, n, _CHUNK)]
    if n_jobs > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(lambda b: _knn_chunk(X, b[0], b[1], k), bounds))
    else:
        parts = [_knn_chunk(X, s, e, k) for s, e in bounds]
    idx = np.vstack([p[0] for p in parts]).astype(np.int64)
    dist = np.vstack([p[1] for p in parts])
    return KNNResult(idx, dist)


def tune_sigma(knn: KNNResult, k: int | None = None) -> float:
    """Mean distance to each node's k-th neighbor, divided by 3."""
    k = knn.k if k is None else k
    if not 1 <= k <= knn.k:
        raise InvalidArgumentError(f"need k in [1, {knn.k}] for this neighbor table, got {k}")
    kth = knn.distances[:, k - 1]
    sigma = float(kth.sum() / (3.0 * kth.size))
    if not sigma > 0.0:
        raise DegenerateBandwidthError("every k-th neighbor distance is zero; duplicate points?")
    return sigma


def rbf_weight(dist, sigma: float):
    """``exp(-dist**2 / (2 sigma**2))``; works elementwise on arrays."""
    return np.exp(-np.square(dist) / (2.0 * sigma * sigma))


def directed_knn_graph(knn: KNNResult, sigma: float) -> SimilarityGraph:
    """RBF-weighted directed kNN graph, before symmetrization."""
    n, k = knn.indices.shape
    rows = np.repeat(np.arange(n), k)
    W = sp.csr_matrix(
        (rbf_weight(knn.distances.ravel(), sigma), (rows, knn.indices.ravel())), shape=(n, n)
    )
    W.sum_duplicates()
    W.sort_indices()
    return SimilarityGraph(W, sigma, k)


def symmetrize_min(g: SimilarityGraph) -> SimilarityGraph:
    """Keep ``min(W_ij, W_ji)`` with absent entries counting as 0, then drop zeros."""
    W = g.weights.minimum(g.weights.T).tocsr()
    W.eliminate_zeros()
    W.sort_indices()
    return replace(g, weights=W, normalized=False)


def row_normalize(g: SimilarityGraph) -> SimilarityGraph:
    """Scale each non-empty row to sum 1; empty rows are recorded in ``isolated``."""
    W = g.weights.tocsr(copy=True)
    sums = np.asarray(W.sum(axis=1)).ravel()
    isolated = np.flatnonzero(sums == 0)
    # divide rather than multiply by a reciprocal so a lone edge normalizes to exactly 1
    W.data /= np.repeat(sums, np.diff(W.indptr))
    if isolated.size:
        logger.info("%d isolated node(s) after symmetrization", isolated.size)
    return replace(g, weights=W, normalized=True, isolated=isolated)


def build_similarity(data, k: int | None = None, n_jobs: int = 1) -> SimilarityGraph:
    """Full construction: kNN, sigma, RBF weights, min-symmetrize, row-normalize."""
    X = _as_features(data)
    if k is None:
        k = default_k(X.shape[0])
    knn = knn_distances(X, k, n_jobs=n_jobs)
    sigma = tune_sigma(knn, k)
    return row_normalize(symmetrize_min(directed_knn_graph(knn, sigma)))


def export_edgelist(g: SimilarityGraph, path) -> Path:
    """Write ``# N k sigma`` then one ``row col weight`` line per stored entry."""
    path = Path(path)
    W = g.weights.tocoo()
    order = np.lexsort((W.col, W.row))
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"# {g.n_nodes} {g.k} {g.sigma:.17g}\n")
        for i, j, w in zip(W.row[order], W.col[order], W.data[order]):
            fh.write(f"{i} {j} {w:.17g}\n")
    return path


def import_edgelist(path) -> SimilarityGraph:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().lstrip("#").split()
        if len(header) != 3:
            raise InvalidArgumentError(f"{path}: malformed header, expected '# N k sigma'")
        n, k, sigma = int(header[0]), int(header[1]), float(header[2])
        lines = [ln.split() for ln in fh if ln.strip()]
    try:
        body = np.array(lines, dtype=np.float64).reshape(-1, 3)
    except ValueError:
        raise InvalidArgumentError(f"{path}: edge lines must hold 'row col weight'") from None
    W = sp.csr_matrix((body[:, 2], (body[:, 0].astype(np.int64), body[:, 1].astype(np.int64))), shape=(n, n))
    W.sort_indices()
    sums = np.asarray(W.sum(axis=1)).ravel()
    normalized = bool(W.nnz) and np.allclose(sums[sums > 0], 1.0, atol=1e-12)
    return SimilarityGraph(W, sigma, k, normalized=normalized, isolated=np.flatnonzero(sums == 0))
