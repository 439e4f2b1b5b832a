import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_data
from oracles import hajek_by_sorting
from rqslopes.data import Dataset
from rqslopes.quantreg import fit_rq
from rqslopes.rank_scores import (
    hajek_scores_closed_form, rank_scores_lp, ranks, regression_rank_scores,
    score_statistic, score_statistic_process, score_statistics,
)


def test_ranks_stable_ties():
    np.testing.assert_array_equal(ranks([2.0, 1.0, 2.0, 0.5]), [3, 2, 4, 1])


def test_closed_form_values():
    s = hajek_scores_closed_form(np.arange(1, 11), 0.35).scores
    np.testing.assert_allclose(s, [0, 0, 0, 0.5, 1, 1, 1, 1, 1, 1])


def test_lp_matches_closed_form_identity():
    z = np.arange(1.0, 11.0)
    np.testing.assert_allclose(rank_scores_lp(z, 0.35).scores,
                               hajek_scores_closed_form(np.arange(1, 11), 0.35).scores,
                               atol=1e-12)


@pytest.mark.parametrize("bad", [[1, 1, 2], [0, 1, 2], [1.5, 2, 3]])
def test_closed_form_rejects_non_permutations(bad):
    with pytest.raises(ValueError):
        hajek_scores_closed_form(np.array(bad), 0.5)


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 15), alpha=st.floats(0.01, 0.99))
def test_lp_equals_sorting_oracle(seed, n, alpha):
    z = np.random.default_rng(seed).normal(size=n)
    sv = rank_scores_lp(z, alpha)
    np.testing.assert_allclose(sv.scores, hajek_by_sorting(z, alpha), atol=1e-9)
    assert sv.scores.sum() == pytest.approx(n * (1 - alpha), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), c=st.floats(-100, 100))
def test_scores_invariant_to_monotone_transforms(seed, c):
    z = np.random.default_rng(seed).normal(size=9)
    a = rank_scores_lp(z, 0.42).scores
    np.testing.assert_allclose(rank_scores_lp(z + c, 0.42).scores, a, atol=1e-9)
    np.testing.assert_allclose(rank_scores_lp(np.exp(z), 0.42).scores, a, atol=1e-9)


def test_scores_continuous_in_alpha():
    z = np.random.default_rng(1).normal(size=12)
    r = ranks(z)
    prev = None
    jumps = []
    for a in np.arange(0.0, 1.0, 1e-4):
        s = hajek_scores_closed_form(r, a).scores
        if prev is not None:
            jumps.append(np.max(np.abs(s - prev)))
        prev = s
    # piecewise linear with slope n in alpha
    assert max(jumps) <= 12 * 1e-4 + 1e-12


def test_regression_rank_scores_intercept_only_are_hajek():
    y = np.random.default_rng(2).normal(size=10)
    d = Dataset(y, np.empty((10, 0)))
    for a in (0.15, 0.5, 0.83):
        np.testing.assert_allclose(regression_rank_scores(d, a).scores,
                                   hajek_by_sorting(y, a), atol=1e-9)


def test_regression_rank_scores_orthogonality(small_data):
    d = small_data
    a = 0.3
    s = regression_rank_scores(d, a).scores
    np.testing.assert_allclose(d.x_centered.T @ s, 0.0, atol=1e-9)
    assert s.sum() == pytest.approx(d.n * (1 - a))


def test_score_lp_duality_constant():
    d = make_data(8, 8, 1)
    a = 0.3
    fit = fit_rq(d, a)
    assert d.y @ fit.dual_scores - (1 - a) * d.y.sum() == pytest.approx(fit.objective, abs=1e-10)


def test_score_statistics_vectorised_matches_loop(small_data):
    d = small_data
    grid = [0.2, 0.5, 0.7]
    R = np.random.default_rng(0).normal(size=(4, d.n))
    out = score_statistics(R, d.x_centered, grid)
    assert out.shape == (3, 4, d.p)
    for g, a in enumerate(grid):
        for k in range(4):
            s = hajek_by_sorting(R[k], a)
            np.testing.assert_allclose(out[g, k], s @ d.x_centered / np.sqrt(d.n), atol=1e-12)


def test_score_statistic_process_consistent(small_data):
    d = small_data
    b = np.array([0.3, -0.2])
    pts = score_statistic_process(d, b, [0.25, 0.5])
    single = score_statistic(d, b, 0.5)
    np.testing.assert_allclose(pts[1].statistic, single.statistic)
