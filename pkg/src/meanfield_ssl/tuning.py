"""Inverse-temperature tuning from the mode probability.

The mode probability of a labeling is the product over nodes of the
marginal probability of the predicted label. Its per-node logarithm has a
closed-form low-beta approximation; solving ``approx(beta) = ln(gamma)``
gives the tuned ``beta``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidArgumentError, NoRootError

__all__ = [
    "TuningSolution",
    "log_gamma_exact",
    "log_gamma_approx",
    "log_gamma_approx_derivative",
    "solve_beta",
    "gamma_preset",
    "resolve_gamma",
]

MARGINAL_FLOOR = 1e-300
BETA_BRACKET = (1e-12, 1e6)


@dataclass(frozen=True)
class TuningSolution:
    gamma: float
    beta_star: float
    residual: float
    iterations: int
    converged: bool
    method: str = "newton"


def log_gamma_exact(marginals, predicted=None) -> float:
    """``(1/N) sum_i ln phi_i(y_i)`` with ``y`` the predicted labels (``1..q``).

    Marginals are floored at 1e-300 before the log. Rows with non-finite
    entries make the result ``-inf`` (with a RuntimeWarning).
    """
    m = np.asarray(marginals, dtype=np.float64)
    if predicted is None:
        finite = np.all(np.isfinite(m), axis=1)
        predicted = np.where(finite, np.argmax(np.where(np.isfinite(m), m, -np.inf), axis=1) + 1, 1)
    y = np.asarray(predicted, dtype=np.int64)
    if y.shape != (m.shape[0],):
        raise InvalidArgumentError("predicted must have one label per row of marginals")
    picked = m[np.arange(y.size), y - 1]
    if not np.all(np.isfinite(picked)):
        warnings.warn("non-finite marginals; log mode probability is -inf", RuntimeWarning, stacklevel=2)
        return -math.inf
    return float(np.log(np.maximum(picked, MARGINAL_FLOOR)).mean())


def log_gamma_approx(beta: float, r_l: float, q: int) -> float:
    """``beta (r_l + 1/q) - r_l ln(q + 2 beta) - (1 - r_l) ln(q + beta)``.

    Evaluated as ``-ln q`` plus log1p corrections, which is exact at beta = 0.
    """
    return (
        -math.log(q)
        + beta * (r_l + 1.0 / q)
        - r_l * math.log1p(2.0 * beta / q)
        - (1.0 - r_l) * math.log1p(beta / q)
    )


def log_gamma_approx_derivative(beta: float, r_l: float, q: int) -> float:
    return (r_l + 1.0 / q) - 2.0 * r_l / (q + 2.0 * beta) - (1.0 - r_l) / (q + beta)


def _check_tuning_args(gamma, r_l, q):
    if not 0.0 < gamma <= 1.0:
        raise InvalidArgumentError(f"gamma must lie in (0, 1], got {gamma}")
    if not 0.0 < r_l <= 1.0:
        raise InvalidArgumentError(f"r_l must lie in (0, 1], got {r_l}")
    if int(q) != q or q < 2:
        raise InvalidArgumentError(f"q must be an integer >= 2, got {q}")


def _bisect(f, lo, hi, xtol):
    flo = f(lo)
    it = 0
    while hi - lo > xtol * max(1.0, abs(lo)):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
        it += 1
    return 0.5 * (lo + hi), it


def solve_beta(gamma: float, r_l: float, q: int, tol: float = 1e-3, init: float = 1.0,
               max_iter: int = 100) -> TuningSolution:
    """Positive root of ``log_gamma_approx(beta) = ln(gamma)``.

    Newton's method from ``init`` stops once both the step and the residual
    are within ``tol``. If an iterate leaves ``(0, inf)``, the derivative
    vanishes, or Newton fails to settle, the root is bracketed by doubling
    from 1e-12 and refined by bisection.

    The approximation is strictly convex with positive slope at 0, so on
    ``beta >= 0`` it is increasing and the positive root, when it exists,
    is unique. It exists iff ``gamma > 1/q``.
    """
    _check_tuning_args(gamma, r_l, q)
    target = math.log(gamma)

    def g(b):
        return log_gamma_approx(b, r_l, q) - target

    lo, hi = BETA_BRACKET
    if g(lo) >= 0:
        raise NoRootError(
            f"no positive root: ln(gamma) = {target:.6g} does not exceed -ln(q) = {-math.log(q):.6g}"
        )
    if g(hi) < 0:
        raise NoRootError(f"no root below beta = {hi:g}")

    beta = float(init)
    for it in range(1, max_iter + 1):
        slope = log_gamma_approx_derivative(beta, r_l, q)
        if slope <= 0 or not math.isfinite(slope):
            break
        step = g(beta) / slope
        beta_next = beta - step
        if not (0.0 < beta_next < math.inf):
            break
        beta = beta_next
        res = g(beta)
        if abs(step) <= tol and abs(res) <= tol:
            return TuningSolution(gamma, beta, res, it, True, "newton")

    # doubling bracket, then bisection
    a = lo
    b = max(2.0 * lo, 1.0)
    while g(b) < 0 and b < hi:
        a, b = b, min(2.0 * b, hi)
    root, n_bis = _bisect(g, a, b, xtol=min(tol, 1e-9) * 1e-3)
    res = g(root)
    return TuningSolution(gamma, root, res, n_bis, abs(res) <= tol, "bisection")


def gamma_preset(kind: str, q: int) -> float:
    """``"mid"`` gives (1 + q) / (2q), halfway between 1/q and 1; ``"full"`` gives 1."""
    if int(q) != q or q < 2:
        raise InvalidArgumentError(f"q must be an integer >= 2, got {q}")
    if kind == "mid":
        return (1.0 + q) / (2.0 * q)
    if kind == "full":
        return 1.0
    raise InvalidArgumentError(f"unknown gamma preset {kind!r}; expected 'mid' or 'full'")


def resolve_gamma(spec, q: int) -> float:
    """Accept a preset name or a number in (0, 1]."""
    if isinstance(spec, str):
        try:
            value = float(spec)
        except ValueError:
            return gamma_preset(spec, q)
    else:
        value = float(spec)
    if not 0.0 < value <= 1.0:
        raise InvalidArgumentError(f"gamma must lie in (0, 1], got {value}")
    return value
