import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.integrate import quad

from fqrsub import (FunctionalDataset, ParameterError, SimulationConfig, compute_scores,
                    draw_uniform, draw_with_replacement, estimate_density_at_zero, eval_basis,
                    make_basis, make_faopt_pipeline, prob_faopt, prob_flopt, prob_uniform, simulate)
from fqrsub.design import DesignMatrix
from fqrsub.sampling import AliasTable, read_plan_csv, write_plan_csv


def dm(rows):
    return DesignMatrix(np.asarray(rows, dtype=float), None)


def test_uniform():
    np.testing.assert_array_equal(prob_uniform(4), [0.25] * 4)
    np.testing.assert_array_equal(prob_uniform(1), [1.0])
    assert abs(prob_uniform(100_000).sum() - 1) <= 1e-12
    with pytest.raises(ParameterError):
        prob_uniform(0)


def test_flopt_examples():
    np.testing.assert_allclose(prob_flopt(dm([[1, 0], [0, 1], [0, 2]])), [0.25, 0.25, 0.5], atol=1e-15)
    np.testing.assert_allclose(prob_flopt(dm(np.tile([0.3, -1.2, 2.0], (5, 1)))), 0.2, atol=1e-15)


def test_flopt_matches_quadrature_oracle():
    b = make_basis(3, 3)
    fs = [lambda t: np.sin(3 * t), lambda t: 1 + t**2, lambda t: np.exp(t) - 2]
    grid = np.linspace(0, 1, 20001)
    ds = FunctionalDataset(grid, np.vstack([f(grid) for f in fs]))
    pi = prob_flopt(compute_scores(ds, b))
    norms = []
    for f in fs:
        s = [quad(lambda t: f(t) * eval_basis(b, t)[k], 0, 1, points=b.breakpoints, epsabs=1e-14)[0]
             for k in range(b.dimension)]
        norms.append(np.linalg.norm(s))
    np.testing.assert_allclose(pi, np.array(norms) / sum(norms), atol=1e-8)


def test_flopt_zero_rows_floored():
    p = prob_flopt(dm([[1, 0], [0, 0], [0, 3]]))
    assert p[1] > 0 and p[1] < 1e-12
    assert abs(p.sum() - 1) <= 1e-12
    with pytest.raises(ParameterError):
        prob_flopt(dm(np.zeros((3, 2))))


def test_faopt_examples(rng):
    B = rng.standard_normal((30, 4))
    np.testing.assert_allclose(prob_faopt(dm(B), np.eye(4)), prob_flopt(dm(B)), atol=1e-15)
    np.testing.assert_allclose(prob_faopt(dm(B), 7.3 * np.eye(4)), prob_flopt(dm(B)), atol=1e-15)
    np.testing.assert_allclose(prob_faopt(dm(np.eye(2)), np.diag([1.0, 10.0])), [10 / 11, 1 / 11], atol=1e-15)


def test_faopt_rejects_ill_conditioned(rng):
    B = rng.standard_normal((10, 3))
    with pytest.raises(ParameterError, match="condition"):
        prob_faopt(dm(B), np.diag([1.0, 1.0, 1e-14]))
    with pytest.raises(ParameterError):
        prob_faopt(dm(B), np.eye(4))


def test_faopt_matches_direct_solve(rng):
    B = rng.standard_normal((40, 5))
    A = rng.standard_normal((5, 5))
    H = A @ A.T + np.eye(5)
    w = np.linalg.norm(np.linalg.solve(H, B.T), axis=0)
    np.testing.assert_allclose(prob_faopt(dm(B), H), w / w.sum(), atol=1e-14)


def test_density_estimates(rng):
    assert abs(estimate_density_at_zero(rng.standard_normal(10_000)) - 0.3989) <= 0.03
    assert abs(estimate_density_at_zero(rng.uniform(-0.5, 0.5, 10_000)) - 1.0) <= 0.08
    f = estimate_density_at_zero(np.full(50, 2.0))
    assert np.isfinite(f) and f > 0
    with pytest.raises(ParameterError):
        estimate_density_at_zero(np.zeros(29))


@pytest.fixture(scope="module")
def sim5000():
    train, _ = simulate(SimulationConfig(n=5000, m_test=0, seed=21))
    b = make_basis(9, 3)
    return train, b, compute_scores(train, b)


@pytest.mark.xfail(strict=True, reason=(
    "for Gaussian scores ||B_i|| and ||G^-1 B_i|| have nearly unrelated ranks when G is "
    "anisotropic; Spearman is about 0.7 here"))
def test_faopt_pipeline_tracks_flopt(sim5000):
    ds, b, design = sim5000
    p = make_faopt_pipeline(ds, b, 0.5, 1.0, 2, r0=500, seed=3, design=design)
    rho = stats.spearmanr(p, prob_flopt(design))[0]
    assert rho >= 0.9
    assert abs(p.sum() - 1) <= 1e-12


def test_faopt_ranks_follow_flopt_for_isotropic_scores(rng):
    n, d = 5000, 6
    B = rng.standard_normal((n, d)) * rng.exponential(1.0, n)[:, None]
    y = B.sum(axis=1) + rng.standard_normal(n)
    G = B.T @ B / n
    rho = stats.spearmanr(prob_faopt(dm(B), 0.4 * G), prob_flopt(dm(B)))[0]
    assert rho >= 0.9


def test_faopt_pipeline_reconstruction(sim5000):
    from fqrsub import assemble_Htau, fit_subsample, gram_G, penalty_matrix, predict
    ds, b, design = sim5000
    pilot = draw_uniform(ds.n, 400, seed=11)
    m = fit_subsample(ds, b, 0.5, 1.0, 2, pilot, design=design)
    resid = np.repeat(ds.responses[pilot.indices] - predict(m, design.scores[pilot.indices]), pilot.counts)
    H = assemble_Htau(estimate_density_at_zero(resid) * gram_G(design), 1.0, ds.n, penalty_matrix(b, 2))
    expect = prob_faopt(design, H)
    got = make_faopt_pipeline(ds, b, 0.5, 1.0, 2, r0=400, seed=11, design=design)
    np.testing.assert_array_equal(got, expect)
    assert stats.spearmanr(got, prob_flopt(design))[0] > 0.5


def test_faopt_pipeline_deterministic(sim5000):
    ds, b, design = sim5000
    a = make_faopt_pipeline(ds, b, 0.75, 0.1, 2, r0=300, seed=7, design=design)
    c = make_faopt_pipeline(ds, b, 0.75, 0.1, 2, r0=300, seed=7)
    assert a.tobytes() == c.tobytes()
    with pytest.raises(ParameterError):
        make_faopt_pipeline(ds, b, 0.5, 1.0, 2, r0=199, seed=7)


def test_simplex_and_scaling_invariance(sim5000):
    ds, b, design = sim5000
    for p in (prob_uniform(ds.n), prob_flopt(design),
              prob_faopt(design, design.scores.T @ design.scores / ds.n + np.eye(b.dimension) * 1e-3)):
        assert abs(p.sum() - 1) <= 1e-12 and p.min() > 0
    scaled = FunctionalDataset(ds.grid, 3.7 * ds.curves)
    np.testing.assert_allclose(prob_flopt(compute_scores(scaled, b)), prob_flopt(design), rtol=0, atol=1e-12)


def test_point_mass_draws():
    p = prob_flopt(dm(np.r_[[[1.0]], np.zeros((9, 1))]))
    plan = draw_with_replacement(p, 5, seed=1)
    np.testing.assert_array_equal(plan.indices, [0])
    np.testing.assert_array_equal(plan.counts, [5])
    assert np.isfinite(plan.max_inverse_weight)


def test_count_conservation(rng):
    for trial in range(1000):
        n = int(rng.integers(1, 40))
        p = rng.dirichlet(np.ones(n))
        r = int(rng.integers(1, 300))
        plan = draw_with_replacement(p, r, seed=trial)
        assert plan.counts.sum() == r
        assert np.all(plan.counts > 0)
        assert np.all((plan.indices >= 0) & (plan.indices < n))
        assert np.all(np.diff(plan.indices) > 0)


def test_uniform_frequencies():
    r = 100_000
    plan = draw_with_replacement(prob_uniform(4), r, seed=2024)
    freq = np.zeros(4)
    freq[plan.indices] = plan.counts / r
    assert np.all(np.abs(freq - 0.25) <= 3 * np.sqrt(0.25 * 0.75 / r))


def test_alias_matches_target_distribution():
    p = np.array([0.5, 0.2, 0.15, 0.1, 0.05])
    draws = AliasTable(p).sample(200_000, np.random.default_rng(9))
    counts = np.bincount(draws, minlength=5)
    assert stats.chisquare(counts, p * len(draws)).pvalue > 1e-3


def test_draw_determinism_and_validation():
    p = np.random.default_rng(0).dirichlet(np.ones(50))
    a = draw_with_replacement(p, 300, seed=5)
    b = draw_with_replacement(p, 300, seed=5)
    np.testing.assert_array_equal(a.indices, b.indices)
    np.testing.assert_array_equal(a.counts, b.counts)
    for bad in ([0.5, 0.6], [-0.1, 1.1], [np.nan, 1.0], []):
        with pytest.raises(ParameterError):
            draw_with_replacement(np.array(bad), 10, seed=0)
    with pytest.raises(ParameterError):
        draw_with_replacement(p, 0, seed=0)
    u1, u2 = draw_uniform(50, 200, seed=3), draw_uniform(50, 200, seed=3)
    np.testing.assert_array_equal(u1.indices, u2.indices)
    assert u1.counts.sum() == 200


@given(st.lists(st.floats(0.01, 10), min_size=1, max_size=30), st.integers(1, 500), st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_plan_invariants(weights, r, seed):
    p = np.array(weights) / np.sum(weights)
    plan = draw_with_replacement(p, r, seed=seed)
    assert plan.counts.sum() == r
    np.testing.assert_allclose(plan.case_weights(), plan.counts / (r * p[plan.indices]))


def test_plan_csv_round_trip(tmp_path):
    p = np.random.default_rng(1).dirichlet(np.ones(30))
    plan = draw_with_replacement(p, 100, seed=4, method="FLopt")
    write_plan_csv(plan, tmp_path / "plan.csv")
    back = read_plan_csv(tmp_path / "plan.csv", 30, method="FLopt")
    np.testing.assert_array_equal(back.indices, plan.indices)
    np.testing.assert_array_equal(back.counts, plan.counts)
    np.testing.assert_array_equal(back.case_weights(), plan.case_weights())
    assert (tmp_path / "plan.csv").read_text().splitlines()[0] == "index,count,prob"
