"""scikit-learn compatible wrappers around the graph construction and solvers.

The classifiers are transductive: ``fit(X, y)`` labels every row of ``X``
(unlabeled rows carry ``y == -1``), and ``predict`` / ``predict_proba`` only
accept the data they were fitted on.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import inference
from ._validation import check_affinity, check_positive_int, check_semi_supervised_target
from .exceptions import InvalidArgumentError
from .graph import SimilarityGraph, build_similarity, default_k, row_normalize
from .inference import SolveConfig
from .tuning import log_gamma_exact, resolve_gamma, solve_beta

__all__ = [
    "SimilarityGraphTransformer",
    "GaussianRandomFields",
    "LocalGlobalConsistency",
    "NaiveMeanFieldPotts",
]


class SimilarityGraphTransformer(TransformerMixin, BaseEstimator):
    """Map a feature matrix to its row-normalized mutual-kNN RBF weight matrix.

    Parameters
    ----------
    n_neighbors : int or None
        Neighbors per node; ``None`` uses ``ceil(log2 N)``.
    n_jobs : int
        Threads for the neighbor search.
    """

    def __init__(self, n_neighbors=None, n_jobs=1):
        self.n_neighbors = n_neighbors
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        check_positive_int(self.n_neighbors, "n_neighbors", allow_none=True)
        self.graph_ = build_similarity(X, self.n_neighbors, n_jobs=self.n_jobs)
        self.n_features_in_ = X.shape[1]
        self._fit_X = X
        return self

    def transform(self, X):
        check_is_fitted(self, "graph_")
        X = check_array(X, dtype=np.float64)
        if X.shape != self._fit_X.shape or not np.array_equal(X, self._fit_X):
            raise InvalidArgumentError("the similarity graph is transductive; transform only the fitted X")
        return self.graph_.weights.copy()


class _GraphSSL(ClassifierMixin, BaseEstimator):
    """Shared fit/predict plumbing; subclasses implement ``_solve``."""

    def _build_graph(self, X):
        if self.affinity == "precomputed":
            W = check_affinity(X)
            g = SimilarityGraph(W, sigma=float("nan"), k=0)
            return row_normalize(g) if self.normalize_precomputed else g
        if self.affinity != "knn":
            raise InvalidArgumentError(f"affinity must be 'knn' or 'precomputed', got {self.affinity!r}")
        X = check_array(X, dtype=np.float64)
        k = check_positive_int(self.n_neighbors, "n_neighbors", allow_none=True)
        return build_similarity(X, k if k is not None else default_k(X.shape[0]), n_jobs=self.n_jobs)

    def _config(self, **extra):
        return SolveConfig(t_max=self.max_iter, epsilon=self.tol, n_jobs=self.n_jobs, **extra)

    def fit(self, X, y):
        """Propagate the labels of ``y`` (``-1`` = unlabeled) over the graph of ``X``."""
        self.graph_ = self._build_graph(X)
        n = self.graph_.n_nodes
        self.classes_, self.labeled_indices_, codes = check_semi_supervised_target(y, n)
        q = self.classes_.size
        theta = inference.make_fields(n, self.labeled_indices_, codes, q)
        result = self._solve(theta, codes)
        self.label_distributions_ = result.marginals
        self.n_iter_ = result.iterations
        self.converged_ = result.converged
        self.numeric_failure_ = result.numeric_failure
        self.solve_result_ = result
        self.transduction_ = self.classes_[inference.predict(result.marginals) - 1]
        self._fit_X = X
        return self

    def _check_same(self, X):
        check_is_fitted(self, "transduction_")
        same = X is self._fit_X
        if not same:
            a, b = np.asarray(getattr(X, "toarray", lambda: X)()), np.asarray(
                getattr(self._fit_X, "toarray", lambda: self._fit_X)())
            same = a.shape == b.shape and np.array_equal(a, b)
        if not same:
            raise InvalidArgumentError("transductive model: predict accepts only the data passed to fit")

    def predict(self, X):
        self._check_same(X)
        return self.transduction_

    def predict_proba(self, X):
        self._check_same(X)
        return self.label_distributions_

    def fit_predict(self, X, y):
        return self.fit(X, y).transduction_


class GaussianRandomFields(_GraphSSL):
    """Harmonic-function label propagation with labeled rows clamped.

    Parameters
    ----------
    n_neighbors : int or None
        Neighbors per node for the kNN graph (``None``: ``ceil(log2 N)``).
    affinity : {"knn", "precomputed"}
        With ``"precomputed"``, ``X`` is an N x N weight matrix.
    normalize_precomputed : bool
        Row-normalize a precomputed affinity before solving.
    max_iter, tol : int, float
        Sweep budget and sup-norm stopping threshold.
    n_jobs : int
        Threads per sweep and for the neighbor search.
    """

    def __init__(self, n_neighbors=None, affinity="knn", normalize_precomputed=True,
                 max_iter=10_000, tol=1e-3, n_jobs=1):
        self.n_neighbors = n_neighbors
        self.affinity = affinity
        self.normalize_precomputed = normalize_precomputed
        self.max_iter = max_iter
        self.tol = tol
        self.n_jobs = n_jobs

    def _solve(self, theta, codes):
        return inference.grf_solve(self.graph_, self.labeled_indices_, codes, cfg=self._config(),
                                   q=theta.shape[1])


class LocalGlobalConsistency(_GraphSSL):
    """Label spreading ``f <- alpha W f + (1 - alpha) Y``; same parameters plus ``alpha``."""

    def __init__(self, n_neighbors=None, alpha=0.99, affinity="knn", normalize_precomputed=True,
                 max_iter=10_000, tol=1e-3, n_jobs=1):
        self.n_neighbors = n_neighbors
        self.alpha = alpha
        self.affinity = affinity
        self.normalize_precomputed = normalize_precomputed
        self.max_iter = max_iter
        self.tol = tol
        self.n_jobs = n_jobs

    def _solve(self, theta, codes):
        return inference.lgc_solve(self.graph_, theta, cfg=self._config(alpha=self.alpha))


class NaiveMeanFieldPotts(_GraphSSL):
    """Mean-field Potts classifier with optional automatic ``beta``.

    Parameters
    ----------
    beta : float or "auto"
        Inverse temperature. ``"auto"`` solves the low-beta mode-probability
        equation for the label rate of ``y`` and the number of classes.
    gamma : {"full", "mid"} or float
        Target per-node mode probability used when ``beta="auto"``.

    Attributes
    ----------
    beta_ : float
        Inverse temperature actually used.
    log_gamma_ : float
        Per-node log mode probability of the fitted marginals.
    """

    def __init__(self, n_neighbors=None, beta="auto", gamma="full", affinity="knn",
                 normalize_precomputed=True, max_iter=10_000, tol=1e-3, n_jobs=1):
        self.n_neighbors = n_neighbors
        self.beta = beta
        self.gamma = gamma
        self.affinity = affinity
        self.normalize_precomputed = normalize_precomputed
        self.max_iter = max_iter
        self.tol = tol
        self.n_jobs = n_jobs

    def _solve(self, theta, codes):
        n, q = theta.shape
        if isinstance(self.beta, str):
            if self.beta != "auto":
                raise InvalidArgumentError(f"beta must be a number or 'auto', got {self.beta!r}")
            self.gamma_ = resolve_gamma(self.gamma, q)
            self.tuning_ = solve_beta(self.gamma_, self.labeled_indices_.size / n, q)
            self.beta_ = self.tuning_.beta_star
        else:
            self.beta_ = float(self.beta)
        result = inference.nmf_solve(self.graph_, theta, cfg=self._config(beta=self.beta_))
        self.log_gamma_ = log_gamma_exact(result.marginals)
        return result
