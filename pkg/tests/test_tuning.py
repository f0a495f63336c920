import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from meanfield_ssl.exceptions import InvalidArgumentError, NoRootError
from meanfield_ssl.tuning import (
    gamma_preset,
    log_gamma_approx,
    log_gamma_approx_derivative,
    log_gamma_exact,
    resolve_gamma,
    solve_beta,
)

from oracles import approx_formula, bisect_root

RATES = [round(0.02 * i, 2) for i in range(1, 11)]
QS = [2, 3, 5, 10]


class TestExact:
    def test_uniform(self):
        assert log_gamma_exact(np.full((7, 4), 0.25), np.ones(7, dtype=int)) == pytest.approx(-math.log(4), rel=1e-15)

    def test_one_hot(self):
        m = np.eye(3)
        assert log_gamma_exact(m, [1, 2, 3]) == 0.0

    def test_default_prediction_is_argmax(self):
        m = np.array([[0.2, 0.8], [0.6, 0.4]])
        assert log_gamma_exact(m) == pytest.approx((math.log(0.8) + math.log(0.6)) / 2)

    def test_zero_is_floored(self):
        assert log_gamma_exact(np.array([[0.0, 1.0]]), [1]) == pytest.approx(math.log(1e-300))

    def test_non_finite_sentinel(self):
        with pytest.warns(RuntimeWarning):
            assert log_gamma_exact(np.array([[np.nan, 0.5]]), [1]) == -math.inf

    def test_two_moons_stable_region(self):
        from meanfield_ssl.datasets import gen_two_moons, sample_labeled
        from meanfield_ssl.graph import build_similarity
        from meanfield_ssl.inference import SolveConfig, make_fields, nmf_solve

        ds = gen_two_moons(1000, 0.1, 0)
        split = sample_labeled(ds, 0.1, 0)
        theta = make_fields(1000, split.labeled_indices, ds.labels[split.labeled_indices], 2)
        res = nmf_solve(build_similarity(ds), theta, cfg=SolveConfig(beta=10.0))
        assert log_gamma_exact(res.marginals) > math.log(3 / 4)


class TestApprox:
    @settings(max_examples=200)
    @given(r=st.floats(1e-6, 1.0), q=st.integers(2, 50))
    def test_zero_beta_exact(self, r, q):
        assert log_gamma_approx(0.0, r, q) == -math.log(q)

    def test_scalar(self):
        assert log_gamma_approx(1.0, 0.1, 2) == pytest.approx(0.6 - 0.1 * math.log(4) - 0.9 * math.log(3), abs=1e-15)
        assert log_gamma_approx(1.0, 0.1, 2) == pytest.approx(-0.527380, abs=1e-6)

    def test_diverges(self):
        vals = [log_gamma_approx(b, 0.1, 3) for b in (1e2, 1e4, 1e6)]
        assert vals[0] < vals[1] < vals[2] and vals[2] > 1e5

    @settings(max_examples=100)
    @given(b=st.floats(0, 1e3), r=st.floats(1e-3, 1.0), q=st.integers(2, 20))
    def test_matches_plain_formula(self, b, r, q):
        assert log_gamma_approx(b, r, q) == pytest.approx(approx_formula(b, r, q), rel=1e-12, abs=1e-12)

    @settings(max_examples=100)
    @given(b=st.floats(1e-3, 1e3), r=st.floats(1e-3, 1.0), q=st.integers(2, 20))
    def test_derivative(self, b, r, q):
        h = 1e-6 * max(1.0, b)
        fd = (log_gamma_approx(b + h, r, q) - log_gamma_approx(b - h, r, q)) / (2 * h)
        assert log_gamma_approx_derivative(b, r, q) == pytest.approx(fd, rel=1e-5, abs=1e-7)


class TestSolve:
    def test_oracle_point(self):
        sol = solve_beta(1.0, 0.1, 2)
        ref = bisect_root(lambda b: approx_formula(b, 0.1, 2), 1e-9, 1e3)
        assert abs(sol.beta_star - ref) <= 1e-3
        assert sol.converged and abs(sol.residual) <= 1e-3

    def test_trivial_root_not_returned(self):
        # gamma = 1/q makes beta = 0 the only non-negative root
        with pytest.raises(NoRootError):
            solve_beta(0.5, 0.1, 2)

    def test_below_equiprobable(self):
        with pytest.raises(NoRootError):
            solve_beta(0.2, 0.1, 3)

    @pytest.mark.parametrize("gamma,r,q", [(0.0, 0.1, 2), (1.5, 0.1, 2), (1.0, 0.0, 2), (1.0, 0.1, 1)])
    def test_invalid(self, gamma, r, q):
        with pytest.raises(InvalidArgumentError):
            solve_beta(gamma, r, q)

    def test_mid_below_full(self):
        for q in QS:
            for r in RATES:
                assert solve_beta(gamma_preset("mid", q), r, q).beta_star < solve_beta(1.0, r, q).beta_star

    def test_monotone_trends(self):
        for kind in ("mid", "full"):
            for q in QS:
                betas = [solve_beta(gamma_preset(kind, q), r, q).beta_star for r in RATES]
                assert all(a >= b for a, b in zip(betas, betas[1:]))
            for r in RATES:
                betas = [solve_beta(gamma_preset(kind, q), r, q).beta_star for q in QS]
                assert all(a <= b for a, b in zip(betas, betas[1:]))

    @settings(max_examples=150, deadline=None)
    @given(frac=st.floats(0.01, 1.0), r=st.floats(0.005, 1.0), q=st.integers(2, 30),
           init=st.floats(1e-6, 1e4), tol=st.sampled_from([1e-3, 1e-6, 1e-9]))
    def test_residual_and_uniqueness(self, frac, r, q, init, tol):
        gamma = 1 / q + frac * (1 - 1 / q)
        sol = solve_beta(gamma, r, q, tol=tol, init=init)
        assert sol.beta_star > 0
        assert abs(log_gamma_approx(sol.beta_star, r, q) - math.log(gamma)) <= tol
        ref = bisect_root(lambda b: approx_formula(b, r, q) - math.log(gamma), 1e-12, 1e6, tol=1e-12)
        assert sol.beta_star == pytest.approx(ref, rel=max(tol, 1e-9) * 100, abs=tol)

    def test_bad_init_falls_back(self):
        sol = solve_beta(1.0, 0.1, 2, init=1e-9, max_iter=1)
        assert sol.converged and abs(sol.residual) <= 1e-3


class TestPresets:
    def test_values(self):
        assert gamma_preset("mid", 2) == 0.75
        assert gamma_preset("mid", 10) == pytest.approx(0.55)
        assert all(gamma_preset("full", q) == 1.0 for q in QS)

    def test_unknown(self):
        with pytest.raises(InvalidArgumentError):
            gamma_preset("high", 2)

    def test_resolve(self):
        assert resolve_gamma("mid", 4) == 0.625
        assert resolve_gamma("0.9", 4) == 0.9
        assert resolve_gamma(1, 4) == 1.0
        with pytest.raises(InvalidArgumentError):
            resolve_gamma(0.0, 4)


def test_no_warnings_on_grid():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        for q in QS:
            for r in RATES:
                solve_beta(1.0, r, q)
