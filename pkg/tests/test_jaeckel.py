import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_data
from oracles import arrangement_vertices, dispersion_by_sorting, minimax_by_highs
from rqslopes.asymptotics import alpha_star
from rqslopes.data import Dataset
from rqslopes.jaeckel import (
    antirank, dispersion, dispersion_gradient, dispersion_uncentered, evaluate_dispersion,
    fit_r_estimator, maximin_slope, minimax_slope, r_estimator_process, rank_weights,
)
from rqslopes.quantreg import fit_rq


def _oracle_minimum(d, alpha, rule):
    cands = arrangement_vertices(d.y, d.X)
    return min(dispersion_by_sorting(d.y, d.X, b, alpha, rule) for b in cands)


def test_dispersion_simple_value():
    d = Dataset([0.0, 0.0, 1.0], np.array([[0.0], [1.0], [2.0]]))
    # at b=0 the centred residuals are (-1/3, -1/3, 2/3); Hajek weights at 0.5 are (0, 0.5, 1)
    assert dispersion(d, [0.0], 0.5) == pytest.approx(-1 / 6 + 2 / 3)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), alpha=st.floats(0.02, 0.98),
       rule=st.sampled_from(["hajek", "indicator"]))
def test_dispersion_matches_sorting_and_uncentred_form(seed, alpha, rule):
    d = make_data(seed, 11, 2)
    b = np.random.default_rng(seed + 1).normal(size=2)
    v = dispersion(d, b, alpha, rule)
    assert v == pytest.approx(dispersion_by_sorting(d.y, d.X, b, alpha, rule), abs=1e-12)
    assert v == pytest.approx(dispersion_uncentered(d, b, alpha, rule), abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), lam=st.floats(0, 1), alpha=st.floats(0.02, 0.98))
def test_convexity(seed, lam, alpha):
    d = make_data(seed, 10, 2)
    rng = np.random.default_rng(seed)
    b1, b2 = rng.normal(size=2) * 2, rng.normal(size=2) * 2
    for rule in ("hajek", "indicator"):
        mid = dispersion(d, lam * b1 + (1 - lam) * b2, alpha, rule)
        assert mid <= lam * dispersion(d, b1, alpha, rule) + (1 - lam) * dispersion(
            d, b2, alpha, rule) + 1e-9


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(0)
    checked = 0
    for trial in range(100):
        d = make_data(trial, 15, 2)
        b = rng.normal(size=2)
        alpha = rng.uniform(0.05, 0.95)
        ev = evaluate_dispersion(d, b, alpha)
        if ev.at_kink:
            continue
        u = rng.normal(size=2)
        u /= np.linalg.norm(u)
        h = 1e-7 * max(1.0, np.linalg.norm(b))
        fd = (dispersion(d, b + h * u, alpha, "indicator")
              - dispersion(d, b - h * u, alpha, "indicator")) / (2 * h)
        g = dispersion_gradient(d, b, alpha) @ u
        assert fd == pytest.approx(g, rel=1e-6, abs=1e-6)
        checked += 1
    assert checked > 80


def test_rank_weights_rules():
    np.testing.assert_allclose(rank_weights(4, 0.4, "hajek"), [0, 0.4, 1, 1])
    np.testing.assert_allclose(rank_weights(4, 0.5, "indicator"), [0, 1, 1, 1])
    with pytest.raises(ValueError):
        rank_weights(4, 0.5, "wilcoxon")


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(5, 9), p=st.integers(1, 2),
       alpha=st.floats(0.03, 0.97), rule=st.sampled_from(["hajek", "indicator"]))
def test_lp_route_reaches_global_minimum(seed, n, p, alpha, rule):
    d = make_data(seed, n, p)
    est = fit_r_estimator(d, alpha, rule)
    assert est.objective == pytest.approx(_oracle_minimum(d, alpha, rule), abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), alpha=st.floats(0.05, 0.95))
def test_descent_exact_for_single_slope(seed, alpha):
    d = make_data(seed, 12, 1)
    lp = fit_r_estimator(d, alpha, "indicator", "lp")
    ds = fit_r_estimator(d, alpha, "indicator", "descent")
    assert ds.objective == pytest.approx(lp.objective, abs=1e-9)


def test_descent_never_beats_lp_in_two_dimensions():
    for seed in range(10):
        d = make_data(seed, 14, 2)
        lp = fit_r_estimator(d, 0.4)
        ds = fit_r_estimator(d, 0.4, method="descent")
        assert lp.objective <= ds.objective + 1e-9


def test_hajek_estimate_equals_rq_slopes():
    d = make_data(5, 20, 2)
    np.testing.assert_allclose(fit_r_estimator(d, 0.35).slopes, fit_rq(d, 0.35).slopes,
                               atol=1e-10)


def test_location_invariance_and_scale_equivariance():
    d = make_data(6, 15, 2)
    base = fit_r_estimator(d, 0.6).slopes
    np.testing.assert_allclose(fit_r_estimator(d.with_response(d.y + 7.0), 0.6).slopes, base,
                               atol=1e-9)
    np.testing.assert_allclose(fit_r_estimator(d.with_response(3.0 * d.y), 0.6).slopes,
                               3.0 * base, atol=1e-9)


def test_minimax_textbook_example():
    d = Dataset([0.0, 0.0, 1.0], np.array([[0.0], [1.0], [2.0]]))
    # max of (-1/3 + b, -1/3, 2/3 - b) is smallest where the outer two cross
    assert minimax_slope(d)[0] == pytest.approx(0.5)


def test_minimax_exact_fit():
    X = np.random.default_rng(0).normal(size=(10, 2))
    d = Dataset(X @ [1.5, -0.5], X)
    np.testing.assert_allclose(minimax_slope(d), [1.5, -0.5], atol=1e-9)


@pytest.mark.parametrize("seed", range(8))
def test_minimax_matches_highs(seed):
    d = make_data(seed, 12, 2)
    val, _ = minimax_by_highs(d.y, d.X)
    b = minimax_slope(d)
    r = d.y - d.X @ b
    assert np.max(r - r.mean()) == pytest.approx(val, abs=1e-9)
    bm = maximin_slope(d)
    r = d.y - d.X @ bm
    val_neg, _ = minimax_by_highs(-d.y, d.X)
    assert np.min(r - r.mean()) == pytest.approx(-val_neg, abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_antirank_inequality(seed):
    d = make_data(seed, 15, 2)
    out = minimax_slope(d)
    ls = np.linalg.lstsq(d.x_centered, d.y - d.y.mean(), rcond=None)[0]
    for b in (np.zeros(2), ls):
        D = antirank(d, b)
        xc = d.x_centered[D]
        assert xc @ out >= xc @ b - 1e-9


def test_extreme_alpha_constancy():
    d = make_data(9, 25, 2)
    a_star = alpha_star(d.n, 0.1)
    grid = np.concatenate([np.geomspace(1e-6, a_star, 5), [0.3, 0.6],
                           1 - np.geomspace(a_star, 1e-6, 5)])
    traj = r_estimator_process(d, grid)
    low = traj.slopes_at(grid[:5])
    high = traj.slopes_at(grid[-5:])
    assert np.all(low == low[0]) and np.all(high == high[0])
    np.testing.assert_allclose(high[0], minimax_slope(d), atol=1e-12)
    np.testing.assert_allclose(low[0], maximin_slope(d), atol=1e-12)


def test_indicator_rule_degenerate_when_every_rank_selected():
    d = make_data(1, 10, 1)
    est = fit_r_estimator(d, 0.05, "indicator")
    assert est.degenerate
    assert dispersion(d, [5.0], 0.05, "indicator") == pytest.approx(0.0, abs=1e-12)


def test_process_grid_validation(small_data):
    with pytest.raises(ValueError):
        r_estimator_process(small_data, [0.5, 0.4])
