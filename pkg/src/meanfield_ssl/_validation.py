"""Input checks shared by the estimators."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.utils.validation import check_array

from .exceptions import InfeasibleStratificationError, InvalidArgumentError

UNLABELED = -1


def check_semi_supervised_target(y, n_samples: int):
    """Split a target vector using ``-1`` for unlabeled entries.

    Returns ``(classes, labeled_indices, codes)`` where ``codes`` are the
    labeled entries encoded as ``1..q`` in the order of ``classes``.
    """
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_samples:
        raise InvalidArgumentError(f"y must be a vector of length {n_samples}, got shape {y.shape}")
    labeled = y != UNLABELED
    if not labeled.any():
        raise InvalidArgumentError("y has no labeled entries (all equal -1)")
    classes, codes = np.unique(y[labeled], return_inverse=True)
    if classes.size < 2:
        raise InfeasibleStratificationError("need labeled examples from at least two classes")
    return classes, np.flatnonzero(labeled), codes.astype(np.int64) + 1


def check_affinity(X):
    """A square non-negative weight matrix with an empty diagonal, as CSR."""
    W = sp.csr_matrix(check_array(X, accept_sparse="csr", dtype=np.float64))
    if W.shape[0] != W.shape[1]:
        raise InvalidArgumentError(f"precomputed affinity must be square, got {W.shape}")
    if W.nnz and W.data.min() < 0:
        raise InvalidArgumentError("affinity weights must be non-negative")
    if np.any(W.diagonal() != 0):
        W = W.tolil()
        W.setdiag(0)
        W = W.tocsr()
        W.eliminate_zeros()
    return W


def check_positive_int(value, name: str, allow_none: bool = False):
    if value is None and allow_none:
        return None
    if not isinstance(value, (int, np.integer)) or value < 1:
        raise InvalidArgumentError(f"{name} must be a positive integer, got {value!r}")
    return int(value)
