"""Graph-based transductive classification with GRF, LGC and naive mean-field Potts.

The submodules follow the processing chain: :mod:`datasets` (data and
labeled splits), :mod:`graph` (similarity construction), :mod:`inference`
(propagation solvers), :mod:`tuning` (beta selection), :mod:`metrics` and
:mod:`experiment` (sweeps). :mod:`estimators` wraps the chain in
scikit-learn style classes.
"""

__version__ = "0.1.0"

from .datasets import Dataset, LabeledSplit, gen_five_gaussians, gen_three_clusters, gen_two_moons, load_csv, sample_labeled
from .estimators import GaussianRandomFields, LocalGlobalConsistency, NaiveMeanFieldPotts, SimilarityGraphTransformer
from .graph import SimilarityGraph, build_similarity
from .inference import SolveConfig, SolveResult, grf_solve, lgc_solve, nmf_solve, predict
from .metrics import accuracy, ami
from .tuning import gamma_preset, log_gamma_approx, log_gamma_exact, solve_beta

__all__ = [
    "Dataset",
    "LabeledSplit",
    "gen_two_moons",
    "gen_three_clusters",
    "gen_five_gaussians",
    "load_csv",
    "sample_labeled",
    "SimilarityGraph",
    "build_similarity",
    "SolveConfig",
    "SolveResult",
    "grf_solve",
    "lgc_solve",
    "nmf_solve",
    "predict",
    "accuracy",
    "ami",
    "gamma_preset",
    "log_gamma_approx",
    "log_gamma_exact",
    "solve_beta",
    "GaussianRandomFields",
    "LocalGlobalConsistency",
    "NaiveMeanFieldPotts",
    "SimilarityGraphTransformer",
]
