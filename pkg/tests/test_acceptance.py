"""Acceptance criteria, one marked test (or parametrized group) per criterion.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary ends with
one PASS/FAIL line per criterion.
"""

import math
import time

import numpy as np
import pytest
from scipy.sparse.csgraph import connected_components
from scipy.stats import spearmanr

from meanfield_ssl.datasets import GENERATORS, gen_two_moons, sample_labeled
from meanfield_ssl.experiment import ExperimentConfig, derive_seed, run_experiment, write_outputs
from meanfield_ssl.graph import build_similarity
from meanfield_ssl.inference import (
    SolveConfig,
    grf_solve,
    kl_product_vs_gibbs,
    lgc_solve,
    make_fields,
    nmf_residual,
    nmf_solve,
    predict,
)
from meanfield_ssl.metrics import accuracy, ami
from meanfield_ssl.tuning import gamma_preset, log_gamma_approx, log_gamma_exact, solve_beta

from conftest import random_symmetric_graph
from oracles import approx_formula, bisect_root, harmonic_solution, lgc_closed_form

BETA_GRID = [10.0 ** (-3 + 0.2 * i) for i in range(31)]
RATES = [0.02, 0.1, 0.2]
# the oracle comparisons need the iteration error well below 1e-6, so the
# stopping threshold is tightened from the 1e-3 default
ORACLE_CFG = SolveConfig(t_max=100_000, epsilon=1e-11)


def _oracle_instances():
    """20 kNN graphs (N=100, q=3, k=7) over uniform points in the unit square.

    Ten random labeled nodes plus one per connected component, so the
    block system is non-singular.
    """
    out = []
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        g = build_similarity(rng.uniform(size=(100, 2)), 7)
        _, comp = connected_components(g.weights, directed=False)
        labeled = set(rng.choice(100, 10, replace=False).tolist())
        labeled |= {int(np.flatnonzero(comp == c)[0]) for c in np.unique(comp)}
        idx = np.array(sorted(labeled))
        y = rng.integers(1, 4, idx.size)
        y[:3] = [1, 2, 3]
        out.append((g, idx, y))
    return out


@pytest.fixture(scope="module")
def oracle_instances():
    return _oracle_instances()


@pytest.mark.acceptance(1, "GRF matches the block linear solve within 1e-6 on 20 graphs, < 10 s")
def test_grf_oracle(oracle_instances):
    worst, elapsed = 0.0, 0.0
    for g, idx, y in oracle_instances:
        t0 = time.perf_counter()
        res = grf_solve(g, idx, y, cfg=ORACLE_CFG, q=3)
        elapsed += time.perf_counter() - t0
        assert res.converged
        worst = max(worst, np.abs(res.marginals - harmonic_solution(g.toarray(), idx, y, 3)).max())
    print(f"GRF worst sup-norm error {worst:.3g}, solver time {elapsed:.2f} s")
    assert worst <= 1e-6
    assert elapsed < 10.0


@pytest.mark.acceptance(2, "LGC matches (1-a)(I-aW)^-1 theta within 1e-6, a=0.99")
def test_lgc_oracle(oracle_instances):
    cfg = SolveConfig(t_max=100_000, epsilon=1e-11, alpha=0.99)
    worst = 0.0
    for g, idx, y in oracle_instances:
        theta = make_fields(100, idx, y, 3)
        res = lgc_solve(g, theta, cfg=cfg)
        assert res.converged
        worst = max(worst, np.abs(res.marginals - lgc_closed_form(g.toarray(), theta, 0.99)).max())
    print(f"LGC worst sup-norm error {worst:.3g}")
    assert worst <= 1e-6


@pytest.mark.acceptance(3, "NMF fixed point: finite KL >= 0, no better perturbation, residual <= 1e-6")
def test_nmf_gibbs_oracle():
    rng = np.random.default_rng(7)
    worst_res, min_gap = 0.0, math.inf
    for _ in range(20):
        n = int(rng.integers(4, 11))
        g = random_symmetric_graph(rng, n, density=0.6)
        n_lab = int(rng.integers(1, 3))
        idx = rng.choice(n, n_lab, replace=False)
        theta = make_fields(n, idx, rng.integers(1, 3, n_lab), 2)
        beta = float(rng.uniform(0.2, 4.0))
        res = nmf_solve(g, theta, cfg=SolveConfig(beta=beta, epsilon=1e-13, t_max=100_000))
        assert res.converged
        worst_res = max(worst_res, nmf_residual(g, theta, res.marginals, beta))
        kl = kl_product_vs_gibbs(res.marginals, g, theta, beta)
        assert math.isfinite(kl) and kl >= 0
        for _ in range(100):
            p = np.clip(res.marginals + rng.normal(scale=0.05, size=res.marginals.shape), 1e-12, None)
            p /= p.sum(axis=1, keepdims=True)
            min_gap = min(min_gap, kl_product_vs_gibbs(p, g, theta, beta) - kl)
    print(f"worst residual {worst_res:.3g}, smallest KL gain of a perturbation {min_gap:.3g}")
    assert worst_res <= 1e-6
    assert min_gap >= 0


@pytest.fixture(scope="module")
def invariance_sweep():
    """Counts of argmax changes and field-bound violations over the full sweep."""
    flips = bound_violations = sweeps = 0
    for name, gen in GENERATORS.items():
        ds = gen(seed=0)
        g = build_similarity(ds)
        nonempty = np.diff(g.weights.indptr) > 0
        for r_l in RATES:
            split = sample_labeled(ds, r_l, derive_seed(0, name, r_l, 0))
            idx = split.labeled_indices
            y = ds.labels[idx]
            theta = make_fields(ds.n_samples, idx, y, ds.q)
            for beta in BETA_GRID:
                lo, hi = beta * theta[nonempty], beta * (theta[nonempty] + 1) + 1e-12

                def check(t, h, phi):
                    nonlocal flips, bound_violations, sweeps
                    sweeps += 1
                    flips += int(np.sum(predict(phi[idx]) != y))
                    hn = h[nonempty]
                    bound_violations += int(np.sum((hn < lo) | (hn > hi)))

                nmf_solve(g, theta, cfg=SolveConfig(beta=beta), callback=check)
    return flips, bound_violations, sweeps


@pytest.mark.acceptance(4, "labeled argmax never changes: 3 generators x 3 rates x 31 beta")
def test_labeled_invariance(invariance_sweep):
    flips, _, sweeps = invariance_sweep
    print(f"{sweeps} sweeps checked, {flips} labeled argmax changes")
    assert flips == 0


@pytest.mark.acceptance(5, "fields satisfy beta*theta <= h <= beta*(theta+1) + 1e-12 on the sweep")
def test_field_bounds(invariance_sweep):
    _, violations, sweeps = invariance_sweep
    print(f"{sweeps} sweeps checked, {violations} bound violations")
    assert violations == 0


@pytest.mark.acceptance(6, "beta = 0: uniform marginals, log Gamma = -ln q, approximation exact")
@pytest.mark.parametrize("name", sorted(GENERATORS))
def test_beta_zero(name):
    ds = GENERATORS[name](seed=1)
    split = sample_labeled(ds, 0.1, 1)
    theta = make_fields(ds.n_samples, split.labeled_indices, ds.labels[split.labeled_indices], ds.q)
    res = nmf_solve(build_similarity(ds), theta, cfg=SolveConfig(beta=0.0))
    assert np.abs(res.marginals - 1.0 / ds.q).max() <= 1e-9
    assert abs(log_gamma_exact(res.marginals) + math.log(ds.q)) <= 1e-9
    for r_l in RATES:
        assert log_gamma_approx(0.0, r_l, ds.q) == -math.log(ds.q)


@pytest.mark.acceptance(7, "tuning grid: oracle agreement, mid < full, monotone trends, < 1 s")
def test_tuning_grid():
    rates = [round(0.02 * i, 2) for i in range(1, 11)]
    qs = [2, 3, 5, 10]
    t0 = time.perf_counter()
    sols = {(kind, q, r): solve_beta(gamma_preset(kind, q), r, q)
            for kind in ("mid", "full") for q in qs for r in rates}
    elapsed = time.perf_counter() - t0
    worst = 0.0
    for (kind, q, r), sol in sols.items():
        target = math.log(gamma_preset(kind, q))
        ref = bisect_root(lambda b: approx_formula(b, r, q) - target, 1e-12, 1e6, tol=1e-9)
        assert abs(approx_formula(sol.beta_star, r, q) - target) <= 1e-3
        worst = max(worst, abs(sol.beta_star - ref))
    for q in qs:
        for r in rates:
            assert sols["mid", q, r].beta_star < sols["full", q, r].beta_star
    for kind in ("mid", "full"):
        for q in qs:
            b = [sols[kind, q, r].beta_star for r in rates]
            assert all(x >= y for x, y in zip(b, b[1:])), (kind, q)
        for r in rates:
            b = [sols[kind, q, r].beta_star for q in qs]
            assert all(x <= y for x, y in zip(b, b[1:])), (kind, r)
    print(f"80 solves in {elapsed * 1e3:.1f} ms, worst |beta - oracle| {worst:.3g}")
    assert worst <= 1e-3
    assert elapsed < 1.0


@pytest.mark.acceptance(8, "approximation error at beta=1e-3 is >= 50x smaller than at 1e-1")
def test_approximation_order():
    ds = gen_two_moons(200, 0.1, 0)
    g = build_similarity(ds, 8)
    split = sample_labeled(ds, 0.1, 0)
    idx = split.labeled_indices
    theta = make_fields(200, idx, ds.labels[idx], 2)
    errors = {}
    for beta in (1e-3, 1e-1):
        res = nmf_solve(g, theta, cfg=SolveConfig(beta=beta, epsilon=1e-14, t_max=100_000))
        assert res.converged
        errors[beta] = abs(log_gamma_approx(beta, idx.size / 200, 2) - log_gamma_exact(res.marginals))
    ratio = errors[1e-1] / errors[1e-3]
    print(f"errors {errors}, ratio {ratio:.1f}")
    assert ratio >= 50


def _desk_config(**kw):
    base = dict(dataset="two_moons", dataset_count=1000, k=[10], r_l=[0.1], realizations=20,
                seed=0, plots=False, workers=4)
    base.update(kw)
    return ExperimentConfig(**base).validate()


@pytest.fixture(scope="module")
def desk_runs():
    t0 = time.perf_counter()
    tuned = run_experiment(_desk_config(beta_mode="tuned", gammas=["full"]))
    cold = run_experiment(_desk_config(beta_mode="fixed", beta=1e-3, algorithms=["nmf"]))
    return tuned, cold, time.perf_counter() - t0


@pytest.mark.acceptance(9, "two moons: tuned beta beats beta=1e-3 by >= 0.3, log Gamma > ln 0.75, < 5 min")
def test_phase_behavior(desk_runs):
    tuned, cold, elapsed = desk_runs
    hot = [r for r in tuned if r.algorithm == "nmf"]
    assert len(hot) == len(cold) == 20
    assert all(r.error == "" for r in hot + cold)
    assert [r.seed for r in hot] == [r.seed for r in cold]
    acc_hot = np.mean([r.accuracy for r in hot])
    acc_cold = np.mean([r.accuracy for r in cold])
    log_g = [r.log_gamma_exact for r in hot]
    print(f"tuned beta {hot[0].beta:.4g}: accuracy {acc_hot:.4f}; beta 1e-3: {acc_cold:.4f}; "
          f"min log Gamma {min(log_g):.4f} vs {math.log(0.75):.4f}; {elapsed:.1f} s")
    assert acc_hot - acc_cold >= 0.3
    assert min(log_g) > math.log(0.75)
    assert elapsed < 300


@pytest.mark.acceptance(10, "two moons desk run: all algorithms >= 0.90, Spearman(AMI, accuracy) >= 0.8")
def test_desk_comparison(desk_runs):
    tuned, _, _ = desk_runs
    # both scopes are reported; the criterion is judged on the unlabeled nodes
    everything = run_experiment(_desk_config(beta_mode="tuned", gammas=["full"], eval_set="all"))
    failures = []
    for algo in ("grf", "lgc", "nmf"):
        rows = [r for r in tuned if r.algorithm == algo]
        acc = np.array([r.accuracy for r in rows])
        mi = np.array([r.ami for r in rows])
        rho = spearmanr(acc, mi).correlation
        discordant = sum((acc[i] - acc[j]) * (mi[i] - mi[j]) < 0
                         for i in range(len(acc)) for j in range(i + 1, len(acc)))
        rows_all = [r for r in everything if r.algorithm == algo]
        rho_all = spearmanr([r.accuracy for r in rows_all], [r.ami for r in rows_all]).correlation
        print(f"{algo}: unlabeled accuracy {acc.mean():.4f}, AMI {mi.mean():.4f}, Spearman {rho:.3f} "
              f"({discordant} discordant pairs, {np.unique(acc).size} distinct accuracies); "
              f"all-node Spearman {rho_all:.3f}")
        assert len(rows) == 20
        if acc.mean() < 0.90:
            failures.append(f"{algo} accuracy {acc.mean():.4f}")
        if not rho >= 0.8:
            failures.append(f"{algo} Spearman {rho:.3f}")
    assert not failures, failures


@pytest.mark.acceptance(11, "metrics: AMI identity, permutation, symmetry, null baseline; accuracy counts")
def test_metrics_suite():
    rng = np.random.default_rng(3)
    a = rng.integers(1, 4, 60)
    b = np.where(rng.uniform(size=60) < 0.7, a, rng.integers(1, 4, 60))
    assert ami(a, a) == pytest.approx(1.0, abs=1e-12)
    perm = np.array([3, 1, 2])
    assert ami(perm[a - 1], b) == pytest.approx(ami(a, b), abs=1e-12)
    assert ami(a, perm[b - 1]) == pytest.approx(ami(a, b), abs=1e-12)
    assert ami(b, a) == pytest.approx(ami(a, b), abs=1e-12)
    null = [ami(rng.integers(1, 5, 500), rng.integers(1, 5, 500)) for _ in range(200)]
    print(f"null AMI mean {np.mean(null):.4g}")
    assert abs(np.mean(null)) <= 0.02
    assert accuracy([1, 2, 2], [1, 2, 2]) == 1.0
    assert accuracy([2, 1], [1, 2]) == 0.0
    assert accuracy([1] * 7 + [2] * 3, [1] * 10) == pytest.approx(0.7)


@pytest.mark.acceptance(12, "results.csv is byte-identical across reruns and 1 vs 8 workers")
def test_determinism(tmp_path):
    def run(workers, tag):
        cfg = ExperimentConfig(dataset="three_clusters", dataset_count=300, k=[6, 9], r_l=[0.05, 0.1],
                               realizations=4, beta_mode="tuned", gammas=["mid", "full"], seed=11,
                               workers=workers, plots=False, output_dir=str(tmp_path / tag)).validate()
        return write_outputs(cfg, run_experiment(cfg))["results"].read_bytes()

    one, again, eight = run(1, "a"), run(1, "b"), run(8, "c")
    assert one == again
    assert one == eight
