"""Hajek rank scores, their LP characterisation, and the score-statistic process."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .lp import LpError, LpProblem, solve
from .quantreg import fit_rq


@dataclass
class ScoreVector:
    alpha: float
    scores: np.ndarray


@dataclass
class ScoreProcessPoint:
    alpha: float
    statistic: np.ndarray


def ranks(z) -> np.ndarray:
    """Ranks 1..n; ties are broken by observation index."""
    z = np.asarray(z, dtype=float)
    r = np.empty(z.shape, dtype=np.intp)
    r[np.argsort(z, kind="stable")] = np.arange(1, z.size + 1)
    return r


def _scores_from_ranks(rank_values, n: int, alpha):
    """``clip(R - n*alpha, 0, 1)``; broadcasts over ``alpha``."""
    return np.clip(np.asarray(rank_values, dtype=float) - n * np.asarray(alpha, dtype=float), 0.0, 1.0)


def hajek_scores_closed_form(rank_vector, alpha: float) -> ScoreVector:
    """Hajek scores ``a_n(R_i, alpha)``.

    0 for ``R_i <= n*alpha``, ``R_i - n*alpha`` inside the unit band above
    ``n*alpha`` and 1 beyond it.
    """
    rk = np.asarray(rank_vector)
    n = rk.size
    if not np.issubdtype(rk.dtype, np.integer):
        if not np.all(rk == np.round(rk)):
            raise ValueError("ranks must be integers")
        rk = rk.astype(np.intp)
    if n == 0 or not np.array_equal(np.sort(rk), np.arange(1, n + 1)):
        raise ValueError("ranks must be a permutation of 1..n")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha!r}")
    return ScoreVector(float(alpha), _scores_from_ranks(rk, n, alpha))


def rank_scores_lp(Z, alpha: float) -> ScoreVector:
    """Scores as the solution of ``max Z @ a`` s.t. ``sum(a) = n(1-alpha)``, ``0 <= a <= 1``."""
    Z = np.asarray(Z, dtype=float).ravel()
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    n = Z.size
    sol = solve(LpProblem(Z, np.ones((1, n)), [n * (1.0 - alpha)], 0.0, 1.0, "maximize"))
    if not sol.optimal:
        raise LpError(f"score LP is {sol.status}")
    return ScoreVector(float(alpha), np.clip(sol.variables, 0.0, 1.0))


def regression_rank_scores(data: Dataset, alpha: float) -> ScoreVector:
    """Regression rank scores: the dual solution reported by :func:`fit_rq`."""
    return ScoreVector(float(alpha), fit_rq(data, alpha).dual_scores)


def score_statistics(residuals, x_centered, alphas) -> np.ndarray:
    """Vectorised ``n^{-1/2} sum_i xc_i a(R_i, alpha)``.

    ``residuals`` has shape ``(..., n)``; the result has shape
    ``(len(alphas), ..., p)``.
    """
    a = hajek_score_matrix(residuals, alphas)
    return (a @ x_centered) / np.sqrt(a.shape[-1])


def hajek_score_matrix(residuals, alphas) -> np.ndarray:
    """Hajek scores of the rows of ``residuals``; shape ``(len(alphas), ..., n)``."""
    residuals = np.asarray(residuals, dtype=float)
    n = residuals.shape[-1]
    order = np.argsort(residuals, axis=-1, kind="stable")
    rk = np.empty_like(order)
    np.put_along_axis(rk, order, np.arange(1, n + 1), axis=-1)
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    return _scores_from_ranks(rk[None, ...], n, alphas.reshape((-1,) + (1,) * rk.ndim))


def score_statistic(data: Dataset, b, alpha: float) -> ScoreProcessPoint:
    """``A_{n alpha}(n^{-1/2} b)`` with ranks of ``y_i - n^{-1/2} x_i' b``."""
    b = np.asarray(b, dtype=float).reshape(data.p)
    resid = data.y - data.X @ b / np.sqrt(data.n)
    stat = score_statistics(resid, data.x_centered, [alpha])[0]
    return ScoreProcessPoint(float(alpha), stat)


def score_statistic_process(data: Dataset, b, alpha_grid) -> list[ScoreProcessPoint]:
    b = np.asarray(b, dtype=float).reshape(data.p)
    resid = data.y - data.X @ b / np.sqrt(data.n)
    grid = np.asarray(alpha_grid, dtype=float)
    stats = score_statistics(resid, data.x_centered, grid)
    return [ScoreProcessPoint(float(a), s) for a, s in zip(grid, stats)]
