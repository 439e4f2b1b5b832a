import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_data
from rqslopes.data import Dataset
from rqslopes.jaeckel import fit_r_estimator
from rqslopes.quantreg import check_loss
from rqslopes.twostep import (
    empirical_quantile, order_index, resolve_slopes, two_step_fit, two_step_process,
)


@pytest.mark.parametrize("n, alpha, k", [(30, 0.9, 27), (10, 0.3, 3), (10, 0.31, 4),
                                         (5, 1e-9, 1), (5, 0.999999, 5)])
def test_order_index(n, alpha, k):
    assert order_index(n, alpha) == k


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 40), alpha=st.floats(0.001, 0.999))
def test_empirical_quantile_matches_sort(seed, n, alpha):
    v = np.random.default_rng(seed).normal(size=n)
    k = int(np.ceil(n * alpha - 1e-9 * n))
    assert empirical_quantile(v, alpha) == np.sort(v)[max(k, 1) - 1]


def test_empirical_quantile_minimises_check_loss():
    v = np.random.default_rng(3).normal(size=17)
    for a in (0.1, 0.5, 0.77):
        q = empirical_quantile(v, a)
        grid = np.linspace(v.min() - 1, v.max() + 1, 2001)
        assert check_loss(v - q, a) <= min(check_loss(v - t, a) for t in grid) + 1e-12


def test_fixed_slopes_intercept_is_residual_quantile():
    d = make_data(2, 20, 2)
    b = np.array([0.5, -0.5])
    fit = two_step_fit(d, 0.25, b)
    assert fit.intercept == empirical_quantile(d.y - d.X @ b, 0.25)
    assert fit.dual_scores.size == 0
    np.testing.assert_array_equal(fit.slopes, b)


def test_default_slopes_are_r_estimate_at_alpha():
    d = make_data(3, 20, 1)
    np.testing.assert_allclose(two_step_fit(d, 0.4).slopes, fit_r_estimator(d, 0.4).slopes)
    with pytest.raises(ValueError):
        resolve_slopes(d, "ols")


@pytest.mark.parametrize("seed", range(10))
def test_process_has_n_segments(seed):
    d = make_data(seed, 25, 2)
    traj = two_step_process(d)
    assert traj.n_segments == d.n
    # the R-estimate ties p residual pairs; fixed generic slopes tie none
    assert traj.meta["distinct_segments"] == d.n - d.p
    assert two_step_process(d, [0.3, 0.7]).meta["distinct_segments"] == d.n
    np.testing.assert_allclose(traj.breakpoints, np.arange(1, d.n) / d.n)
    assert np.all(np.diff(traj.intercepts) >= 0)


def test_process_pointwise_matches_fit():
    d = make_data(4, 12, 1)
    b = fit_r_estimator(d, 0.5).slopes
    traj = two_step_process(d, b)
    for a in np.linspace(0.01, 0.99, 37):
        assert traj.intercept_at(a) == two_step_fit(d, a, b).intercept


def test_ties_collapse_distinct_segments():
    X = np.arange(6.0)[:, None]
    d = Dataset(np.array([0.0, 1.0, 2.0, 3.0, 5.0, 5.0]), X)
    traj = two_step_process(d, [1.0])
    assert traj.meta["nominal_segments"] == 6
    assert traj.meta["distinct_segments"] < 6


def test_asymptotic_equivalence_gap_stays_bounded():
    from rqslopes.cli import _resolve_config
    from rqslopes.montecarlo import load_config, run_twostep_study

    cfg = load_config(_resolve_config("twostep"))
    med = [r["median_scaled_gap"] for r in run_twostep_study(cfg)["rows"]]
    # one slope estimate for every alpha: sqrt(n) * gap is O_p(1), so its median
    # must not drift upward with n beyond Monte Carlo noise
    assert max(med) / med[0] < 1.25, med
