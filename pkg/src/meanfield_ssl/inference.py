"""Iterative propagation engines (GRF, LGC, naive mean-field Potts) and exact oracles.

All solvers run synchronous (Jacobi) sweeps: every row of iteration ``t+1``
is computed from iteration-``t`` values only, so splitting the rows across
threads cannot change the result.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .exceptions import InvalidArgumentError, SizeGuardError
from .graph import SimilarityGraph

__all__ = [
    "SolveConfig",
    "SolveResult",
    "make_fields",
    "initial_marginals",
    "grf_solve",
    "lgc_solve",
    "nmf_solve",
    "nmf_fields",
    "nmf_residual",
    "predict",
    "potts_energy",
    "gibbs_energy",
    "exact_gibbs",
    "kl_product_vs_gibbs",
    "export_marginals",
    "import_marginals",
    "MAX_ENUMERATION",
]

MAX_ENUMERATION = 10**7

Callback = Callable[[int, np.ndarray, np.ndarray], None]


@dataclass(frozen=True)
class SolveConfig:
    """Stopping rule and model parameters shared by the three solvers."""

    t_max: int = 10_000
    epsilon: float = 1e-3
    alpha: float = 0.99
    beta: float = 1.0
    n_jobs: int = 1

    def __post_init__(self):
        if int(self.t_max) != self.t_max or self.t_max < 1:
            raise InvalidArgumentError(f"t_max must be a positive integer, got {self.t_max}")
        if not self.epsilon > 0:
            raise InvalidArgumentError(f"epsilon must be > 0, got {self.epsilon}")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidArgumentError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.beta >= 0 or not np.isfinite(self.beta):
            raise InvalidArgumentError(f"beta must be a finite non-negative number, got {self.beta}")
        if self.n_jobs < 1:
            raise InvalidArgumentError("n_jobs must be >= 1")


@dataclass
class SolveResult:
    marginals: np.ndarray
    iterations: int
    converged: bool
    final_delta: float
    wall_time: float
    numeric_failure: bool = False
    fields: Optional[np.ndarray] = None
    isolated_unlabeled: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def labels(self) -> np.ndarray:
        return predict(self.marginals)


class _RowBlocks:
    """``W @ X`` evaluated block-of-rows-wise on a thread pool."""

    def __init__(self, W: sp.csr_matrix, n_jobs: int = 1):
        self.W = W.tocsr()
        self.n_jobs = n_jobs
        n = self.W.shape[0]
        if n_jobs > 1 and n > 1:
            edges = np.linspace(0, n, min(n_jobs, n) + 1).astype(int)
            self.blocks = [self.W[a:b] for a, b in zip(edges[:-1], edges[1:])]
            self.pool = ThreadPoolExecutor(max_workers=n_jobs)
        else:
            self.blocks = None
            self.pool = None

    def dot(self, X: np.ndarray) -> np.ndarray:
        if self.pool is None:
            return self.W @ X
        return np.vstack(list(self.pool.map(lambda B: B @ X, self.blocks)))

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _weights(g) -> sp.csr_matrix:
    W = g.weights if isinstance(g, SimilarityGraph) else g
    W = sp.csr_matrix(W, dtype=np.float64)
    if W.shape[0] != W.shape[1]:
        raise InvalidArgumentError("weight matrix must be square")
    return W


def make_fields(n_nodes: int, labeled_indices, labels_of_labeled, q: int) -> np.ndarray:
    """One-hot rows for labeled nodes, zero rows elsewhere."""
    idx = np.asarray(labeled_indices, dtype=np.int64)
    y = np.asarray(labels_of_labeled, dtype=np.int64)
    if idx.shape != y.shape:
        raise InvalidArgumentError("labeled_indices and labels_of_labeled differ in length")
    if y.size and (y.min() < 1 or y.max() > q):
        raise InvalidArgumentError(f"labels must lie in 1..{q}")
    theta = np.zeros((n_nodes, q))
    theta[idx, y - 1] = 1.0
    return theta


def initial_marginals(theta: np.ndarray, clamp_labeled: bool = False) -> np.ndarray:
    """Uniform rows; labeled rows one-hot when ``clamp_labeled`` (the GRF start)."""
    n, q = theta.shape
    phi = np.full((n, q), 1.0 / q)
    if clamp_labeled:
        lab = theta.any(axis=1)
        phi[lab] = theta[lab]
    return phi


def _check_init(init, shape) -> np.ndarray:
    phi = np.array(init, dtype=np.float64, copy=True)
    if phi.shape != shape:
        raise InvalidArgumentError(f"init has shape {phi.shape}, expected {shape}")
    return phi


def grf_solve(g, labeled_indices, labels_of_labeled, init=None, cfg: SolveConfig = SolveConfig(),
              q: int | None = None, callback: Callback | None = None) -> SolveResult:
    """Harmonic (GRF) propagation with labeled rows clamped to one-hot.

    Unlabeled rows are replaced by the normalized weighted average of their
    neighbors' rows until the largest entry change drops below ``epsilon``.
    Unlabeled nodes without edges keep their initial row.
    """
    W = _weights(g)
    n = W.shape[0]
    y = np.asarray(labels_of_labeled, dtype=np.int64)
    if q is None:
        q = int(np.shape(init)[1]) if init is not None else int(y.max())
    theta = make_fields(n, labeled_indices, y, q)
    labeled = np.zeros(n, dtype=bool)
    labeled[np.asarray(labeled_indices, dtype=np.int64)] = True
    phi = initial_marginals(theta, clamp_labeled=True) if init is None else _check_init(init, (n, q))
    phi[labeled] = theta[labeled]

    degree = np.diff(W.indptr)
    active = np.flatnonzero(~labeled & (degree > 0))
    isolated = np.flatnonzero(~labeled & (degree == 0))
    W_act = W[active]

    start = time.perf_counter()
    t, delta, failed = 0, cfg.epsilon, False
    with _RowBlocks(W_act, cfg.n_jobs) as prop:
        while t < cfg.t_max and delta >= cfg.epsilon:
            num = prop.dot(phi)
            new = num / num.sum(axis=1, keepdims=True)
            if not np.all(np.isfinite(new)):
                failed = True
                break
            delta = float(np.abs(new - phi[active]).max()) if active.size else 0.0
            phi[active] = new
            t += 1
            if callback is not None:
                callback(t, None, phi)
    return SolveResult(phi, t, (not failed) and delta < cfg.epsilon, delta,
                       time.perf_counter() - start, failed, isolated_unlabeled=isolated)


def lgc_solve(g, theta, init=None, cfg: SolveConfig = SolveConfig(),
              callback: Callback | None = None) -> SolveResult:
    """Local and global consistency: ``f <- alpha W f + (1 - alpha) theta`` on every row."""
    W = _weights(g)
    theta = np.asarray(theta, dtype=np.float64)
    f = initial_marginals(theta) if init is None else _check_init(init, theta.shape)
    base = (1.0 - cfg.alpha) * theta

    start = time.perf_counter()
    t, delta, failed = 0, cfg.epsilon, False
    with _RowBlocks(W, cfg.n_jobs) as prop:
        while t < cfg.t_max and delta >= cfg.epsilon:
            new = cfg.alpha * prop.dot(f) + base
            if not np.all(np.isfinite(new)):
                failed = True
                break
            delta = float(np.abs(new - f).max())
            f = new
            t += 1
            if callback is not None:
                callback(t, None, f)
    return SolveResult(f, t, (not failed) and delta < cfg.epsilon, delta, time.perf_counter() - start, failed)


def _softmax_rows(h: np.ndarray) -> np.ndarray:
    z = np.exp(h - h.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def nmf_fields(g, theta, phi, beta: float) -> np.ndarray:
    """Local fields ``beta * (theta + W phi)``."""
    return beta * (np.asarray(theta) + _weights(g) @ np.asarray(phi))


def nmf_solve(g, theta, init=None, cfg: SolveConfig = SolveConfig(),
              callback: Callback | None = None) -> SolveResult:
    """Naive mean-field fixed point of the Potts model with external fields.

    Each sweep computes ``h = beta (theta + W phi)`` and ``phi = softmax(h)``
    row-wise; convergence is tested on the largest change of ``h`` (starting
    from ``h = 0``). Unlabeled nodes without edges keep their initial row.
    On a non-finite value the solve stops and returns the last finite state
    with ``numeric_failure`` set.
    """
    W = _weights(g)
    theta = np.asarray(theta, dtype=np.float64)
    n, q = theta.shape
    phi = initial_marginals(theta) if init is None else _check_init(init, (n, q))
    beta = cfg.beta
    degree = np.diff(W.indptr)
    frozen = np.flatnonzero((degree == 0) & ~theta.any(axis=1))
    field_part = beta * theta
    h = np.zeros((n, q))

    start = time.perf_counter()
    t, delta, failed = 0, cfg.epsilon, False
    with _RowBlocks(W, cfg.n_jobs) as prop:
        while t < cfg.t_max and delta >= cfg.epsilon:
            # overflow is detected below and reported through numeric_failure
            with np.errstate(over="ignore", invalid="ignore"):
                h_new = field_part + beta * prop.dot(phi)
                phi_new = _softmax_rows(h_new)
            if frozen.size:
                phi_new[frozen] = phi[frozen]
            if not (np.all(np.isfinite(h_new)) and np.all(np.isfinite(phi_new))):
                failed = True
                break
            delta = float(np.abs(h_new - h).max())
            h, phi = h_new, phi_new
            t += 1
            if callback is not None:
                callback(t, h, phi)
    return SolveResult(phi, t, (not failed) and delta < cfg.epsilon, delta,
                       time.perf_counter() - start, failed, fields=h, isolated_unlabeled=frozen)


def nmf_residual(g, theta, phi, beta: float) -> float:
    """Largest entry of ``|phi - softmax(beta (theta + W phi))|``."""
    phi = np.asarray(phi, dtype=np.float64)
    return float(np.abs(phi - _softmax_rows(nmf_fields(g, theta, phi, beta))).max())


def predict(marginals) -> np.ndarray:
    """Row-wise argmax as labels ``1..q``; ties go to the smallest class."""
    m = np.asarray(marginals, dtype=np.float64)
    if m.ndim != 2:
        raise InvalidArgumentError("marginals must be an N x q matrix")
    bad = ~np.all(np.isfinite(m), axis=1)
    if bad.any():
        raise InvalidArgumentError(f"non-finite marginals in rows {np.flatnonzero(bad)[:10].tolist()}")
    return np.argmax(m, axis=1) + 1


def potts_energy(g, labels, theta) -> float:
    """``-sum_{i,j} W_ij [s_i = s_j] - sum_i theta_{i, s_i}`` over ordered pairs."""
    W = _weights(g).tocoo()
    s = np.asarray(labels, dtype=np.int64)
    theta = np.asarray(theta, dtype=np.float64)
    same = s[W.row] == s[W.col]
    return float(-W.data[same].sum() - theta[np.arange(s.size), s - 1].sum())


def gibbs_energy(g, labels, theta) -> float:
    """Energy of the Gibbs target used by :func:`exact_gibbs`.

    Each unordered pair counts once with weight ``(W_ij + W_ji) / 2``. For a
    symmetric ``W`` the naive mean-field stationarity conditions of this
    energy are exactly the updates of :func:`nmf_solve`.
    """
    W = _weights(g).tocoo()
    s = np.asarray(labels, dtype=np.int64)
    theta = np.asarray(theta, dtype=np.float64)
    same = s[W.row] == s[W.col]
    return float(-0.5 * W.data[same].sum() - theta[np.arange(s.size), s - 1].sum())


def _configs(n: int, q: int, start: int, stop: int) -> np.ndarray:
    codes = np.arange(start, stop, dtype=np.int64)
    powers = q ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (codes[:, None] // powers[None, :]) % q


def exact_gibbs(g, theta, beta: float, max_configs: int = MAX_ENUMERATION, chunk: int = 1 << 16):
    """Exact marginals and ``ln Z`` by enumerating all ``q**N`` labelings.

    Returns ``(marginals, log_partition)`` for ``P(s) ~ exp(-beta * gibbs_energy(s))``.
    """
    W = _weights(g).tocoo()
    theta = np.asarray(theta, dtype=np.float64)
    n, q = theta.shape
    total = q**n
    if total > max_configs:
        raise SizeGuardError(f"q**N = {q}**{n} exceeds the enumeration limit {max_configs}")
    off = W.row != W.col
    rows, cols, w = W.row[off], W.col[off], 0.5 * W.data[off]

    log_z = -np.inf
    acc = np.zeros((n, q))
    for start in range(0, total, chunk):
        s = _configs(n, q, start, min(start + chunk, total))
        energy = -((s[:, rows] == s[:, cols]) @ w) - theta[np.arange(n), s].sum(axis=1)
        logw = -beta * energy
        m = logw.max()
        new_z = np.logaddexp(log_z, m + np.log(np.exp(logw - m).sum()))
        acc *= np.exp(log_z - new_z) if np.isfinite(log_z) else 0.0
        p = np.exp(logw - new_z)
        for c in range(q):
            acc[:, c] += p @ (s == c)
        log_z = new_z
    return acc / acc.sum(axis=1, keepdims=True), float(log_z)


def kl_product_vs_gibbs(marginals, g, theta, beta: float, max_configs: int = MAX_ENUMERATION) -> float:
    """``KL(Phi || Psi)`` for the product distribution ``Phi`` built from ``marginals``.

    Uses ``sum_i sum_s phi ln phi + beta E_Phi[energy] + ln Z`` with the
    expectation taken in closed form and ``ln Z`` from :func:`exact_gibbs`.
    """
    phi = np.asarray(marginals, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    _, log_z = exact_gibbs(g, theta, beta, max_configs=max_configs)
    W = _weights(g).tocoo()
    off = W.row != W.col
    pair = (phi[W.row[off]] * phi[W.col[off]]).sum(axis=1)
    expected_energy = -0.5 * (W.data[off] * pair).sum() - (theta * phi).sum()
    with np.errstate(divide="ignore", invalid="ignore"):
        neg_entropy = np.where(phi > 0, phi * np.log(phi), 0.0).sum()
    return float(neg_entropy + beta * expected_energy + log_z)


def export_marginals(marginals, path) -> Path:
    path = Path(path)
    np.savetxt(path, np.asarray(marginals, dtype=np.float64), delimiter=",", fmt="%.17g")
    return path


def import_marginals(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)

