import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_data
from oracles import check_loss, rq_enumeration
from rqslopes.data import Dataset, RankDeficiencyError
from rqslopes.distributions import error_model
from rqslopes.quantreg import fit_rq, population_truth, rq_process


def test_intercept_only_median():
    d = Dataset([1.0, 2.0, 3.0], np.empty((3, 0)))
    fit = fit_rq(d, 0.5)
    assert fit.intercept == pytest.approx(2.0)
    assert fit.slopes.size == 0


def test_exact_fit_recovers_coefficients():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(12, 2))
    d = Dataset(1.0 + X @ [2.0, -3.0], X)
    for a in (0.1, 0.5, 0.9):
        fit = fit_rq(d, a)
        np.testing.assert_allclose(fit.coefficients, [1.0, 2.0, -3.0], atol=1e-9)
        assert fit.objective == pytest.approx(0.0, abs=1e-9)


def test_dual_scores_satisfy_constraints(small_data):
    d = small_data
    for a in (0.2, 0.5, 0.8):
        fit = fit_rq(d, a)
        Z = d.design
        np.testing.assert_allclose(Z.T @ fit.dual_scores, (1 - a) * Z.sum(axis=0), atol=1e-9)
        # complementary slackness: positive residual -> score 1, negative -> 0
        tol = 1e-9
        assert np.all(fit.dual_scores[fit.residuals > tol] > 1 - 1e-9)
        assert np.all(fit.dual_scores[fit.residuals < -tol] < 1e-9)


def test_strong_duality(small_data):
    d = small_data
    for a in (0.3, 0.7):
        fit = fit_rq(d, a)
        dual_value = d.y @ fit.dual_scores - (1 - a) * d.y.sum()
        assert fit.objective == pytest.approx(dual_value, abs=1e-9)


def test_interpolates_p_plus_one_points(small_data):
    fit = fit_rq(small_data, 0.37)
    assert np.sum(np.abs(fit.residuals) < 1e-9) >= small_data.p + 1


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(4, 10), p=st.integers(0, 2),
       alpha=st.floats(0.03, 0.97))
def test_objective_matches_enumeration(seed, n, p, alpha):
    if n <= p + 1:
        return
    d = make_data(seed, n, p)
    best, _ = rq_enumeration(d.y, d.X, alpha)
    assert fit_rq(d, alpha).objective == pytest.approx(best, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000), shift=st.floats(-5, 5), scale=st.floats(0.1, 10))
def test_equivariance(seed, shift, scale):
    d = make_data(seed, 15, 2)
    base = fit_rq(d, 0.4)
    moved = fit_rq(d.with_response(scale * d.y + shift), 0.4)
    # regression and scale equivariance of the objective value
    assert moved.objective == pytest.approx(scale * base.objective, rel=1e-8, abs=1e-9)


def test_alpha_reflection():
    d = make_data(4, 14, 1)
    a = fit_rq(d, 0.3)
    b = fit_rq(d.with_response(-d.y), 0.7)
    assert a.objective == pytest.approx(b.objective, abs=1e-10)


def test_rank_deficient_design_rejected():
    X = np.column_stack([np.arange(6.0), 2 * np.arange(6.0)])
    d = Dataset(np.arange(6.0) ** 2, X)
    with pytest.raises(RankDeficiencyError):
        fit_rq(d, 0.5)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1])
def test_alpha_out_of_range(alpha, small_data):
    with pytest.raises(ValueError):
        fit_rq(small_data, alpha)


def test_process_intercept_only_jumps_at_k_over_n():
    d = Dataset([1.0, 2.0, 3.0], np.empty((3, 0)))
    traj = rq_process(d)
    np.testing.assert_allclose(traj.breakpoints, [1 / 3, 2 / 3], atol=1e-8)
    np.testing.assert_allclose(traj.intercepts, [1.0, 2.0, 3.0])


def test_process_exact_fit_single_segment():
    X = np.linspace(0, 1, 8)[:, None]
    traj = rq_process(Dataset(2 + 3 * X[:, 0], X))
    assert traj.n_segments == 1


def test_process_matches_pointwise_fits():
    d = make_data(21, 16, 2)
    traj = rq_process(d)
    assert traj.breakpoints.size == traj.n_segments - 1
    assert np.all(np.diff(traj.breakpoints) > 0)
    for a in np.linspace(0.005, 0.995, 60):
        # stay away from the breakpoints themselves
        if np.min(np.abs(traj.breakpoints - a)) < 1e-6:
            continue
        fit = fit_rq(d, a)
        assert check_loss(d.y - d.design @ traj.evaluate(a), a) == pytest.approx(
            fit.objective, abs=1e-9)


def test_population_truth():
    icpt, slopes = population_truth(error_model("logistic"), 1.0, [2.0], 0.5)
    assert icpt == pytest.approx(1.0)
    np.testing.assert_array_equal(slopes, [2.0])
