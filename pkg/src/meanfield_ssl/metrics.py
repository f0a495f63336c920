"""Accuracy and adjusted mutual information (natural-log units)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .exceptions import InvalidArgumentError

__all__ = [
    "ContingencyTable",
    "contingency",
    "evaluation_mask",
    "accuracy",
    "entropy",
    "mutual_info",
    "expected_mutual_info",
    "ami",
]


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray
    n: int

    @property
    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)


def contingency(truth, pred) -> ContingencyTable:
    """Counts over the classes that actually occur in each labeling."""
    _, a = np.unique(np.asarray(truth), return_inverse=True)
    _, b = np.unique(np.asarray(pred), return_inverse=True)
    counts = np.zeros((a.max() + 1, b.max() + 1), dtype=np.int64)
    np.add.at(counts, (a, b), 1)
    return ContingencyTable(counts, int(a.size))


def evaluation_mask(n: int, eval_set: str | None = None, labeled_indices=None) -> np.ndarray:
    """Boolean mask of scored nodes, ``"unlabeled"`` or ``"all"``.

    ``None`` means unlabeled-only when labeled indices are given, else all.
    """
    if eval_set is None:
        eval_set = "all" if labeled_indices is None else "unlabeled"
    if eval_set == "all":
        return np.ones(n, dtype=bool)
    if eval_set in ("unlabeled", "unlabeled-only"):
        if labeled_indices is None:
            raise InvalidArgumentError("eval_set='unlabeled' needs the labeled indices")
        mask = np.ones(n, dtype=bool)
        mask[np.asarray(labeled_indices, dtype=np.int64)] = False
        return mask
    raise InvalidArgumentError(f"eval_set must be 'unlabeled' or 'all', got {eval_set!r}")


def _select(pred, truth, eval_set, labeled_indices, min_size):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise InvalidArgumentError("pred and truth must be vectors of equal length")
    mask = evaluation_mask(pred.size, eval_set, labeled_indices)
    if mask.sum() < min_size:
        raise InvalidArgumentError(f"evaluation set has {mask.sum()} element(s); need at least {min_size}")
    return pred[mask], truth[mask]


def accuracy(pred, truth, labeled_indices=None, eval_set: str | None = None) -> float:
    """Fraction of evaluated nodes whose predicted label equals the truth."""
    p, t = _select(pred, truth, eval_set, labeled_indices, 1)
    return float(np.mean(p == t))


def entropy(counts) -> float:
    c = np.asarray(counts, dtype=np.float64)
    c = c[c > 0]
    n = c.sum()
    return float(-(c / n * np.log(c / n)).sum())


def mutual_info(table: ContingencyTable) -> float:
    c = table.counts.astype(np.float64)
    n = float(table.n)
    a = table.row_sums.astype(np.float64)[:, None]
    b = table.col_sums.astype(np.float64)[None, :]
    nz = c > 0
    return float((c[nz] / n * (np.log(n * c[nz]) - np.log((a * b)[nz]))).sum())


def expected_mutual_info(table: ContingencyTable) -> float:
    """Exact E[MI] under the hypergeometric model with the table's marginals."""
    a = table.row_sums.astype(np.int64)
    b = table.col_sums.astype(np.int64)
    n = table.n
    emi = 0.0
    lg_n = gammaln(n + 1)
    for ai in a:
        for bj in b:
            lo, hi = max(1, ai + bj - n), min(ai, bj)
            if lo > hi:
                continue
            nij = np.arange(lo, hi + 1, dtype=np.float64)
            log_p = (
                gammaln(ai + 1) + gammaln(bj + 1) + gammaln(n - ai + 1) + gammaln(n - bj + 1)
                - lg_n - gammaln(nij + 1) - gammaln(ai - nij + 1) - gammaln(bj - nij + 1)
                - gammaln(n - ai - bj + nij + 1)
            )
            term = nij / n * (np.log(n * nij) - np.log(float(ai) * float(bj)))
            emi += float((term * np.exp(log_p)).sum())
    return emi


def _same_partition(a, b) -> bool:
    t = contingency(a, b).counts
    return bool(np.all((t > 0).sum(axis=0) == 1) and np.all((t > 0).sum(axis=1) == 1))


def ami(pred, truth, labeled_indices=None, eval_set: str | None = None) -> float:
    """Adjusted mutual information with arithmetic-mean entropy normalization.

    ``(MI - E[MI]) / (mean(H_truth, H_pred) - E[MI])``. When the denominator
    vanishes the score is 1 for identical partitions and 0 otherwise.
    """
    p, t = _select(pred, truth, eval_set, labeled_indices, 2)
    table = contingency(t, p)
    mi = mutual_info(table)
    emi = expected_mutual_info(table)
    h_mean = 0.5 * (entropy(table.row_sums) + entropy(table.col_sums))
    denom = h_mean - emi
    if abs(denom) < 1e-15:
        return 1.0 if _same_partition(t, p) else 0.0
    return float((mi - emi) / denom)
