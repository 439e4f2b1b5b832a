"""Jaeckel rank dispersion, its gradient, and R-estimators of the slopes.

Two score rules are supported:

``"hajek"``
    the interpolated Hajek scores ``clip(R - n*alpha, 0, 1)``;
``"indicator"``
    the simplified ``I[R >= n*alpha]`` whose dispersion has the familiar
    gradient ``-sum (x_i - xbar) I[R_i >= n*alpha]``.

With either rule the dispersion is a weighted sum of the ordered centred
residuals with nondecreasing weights, hence convex and piecewise linear in
``b``. For the Hajek rule it equals the check-loss objective profiled over
the intercept, so the exact minimiser is a regression-quantile LP; the
indicator rule is the same LP at ``alpha' = 1 - m/n`` where ``m`` counts
the selected ranks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .lp import LpError, LpProblem, solve
from .quantreg import ProcessTrajectory, fit_rq
from .rank_scores import ranks

SCORE_RULES = ("hajek", "indicator")
# slack on n*alpha comparisons so that e.g. 10 * 0.3 counts as 3
_EDGE_FUZZ = 1e-9


@dataclass
class DispersionEvaluation:
    b: np.ndarray
    value: float
    subgradient: np.ndarray
    at_kink: bool = False


@dataclass
class REstimate:
    alpha: float
    slopes: np.ndarray
    objective: float
    degenerate: bool = False
    scores: str = "hajek"
    method: str = "lp"


def rank_weights(n: int, alpha: float, scores="hajek") -> np.ndarray:
    """Score attached to each rank 1..n (entry ``k - 1`` belongs to rank ``k``)."""
    k = np.arange(1, n + 1, dtype=float)
    if isinstance(scores, str):
        if scores == "hajek":
            return np.clip(k - n * alpha, 0.0, 1.0)
        if scores == "indicator":
            return (k >= n * alpha - _EDGE_FUZZ * max(n, 1)).astype(float)
        raise ValueError(f"unknown score rule {scores!r}; choose from {SCORE_RULES}")
    w = np.asarray(scores, dtype=float).ravel()
    if w.size != n:
        raise ValueError(f"expected {n} rank scores, got {w.size}")
    return w


def _centered_residuals(data: Dataset, b) -> np.ndarray:
    b = np.asarray(b, dtype=float).reshape(data.p)
    r = data.y - data.X @ b
    return r - r.mean()


def dispersion(data: Dataset, b, alpha: float, scores="hajek") -> float:
    """``sum_i [(y_i - ybar) - (x_i - xbar)' b] a(R_i(y - X b))``."""
    r = _centered_residuals(data, b)
    w = rank_weights(data.n, alpha, scores)
    return float(r @ w[ranks(r) - 1])


def dispersion_uncentered(data: Dataset, b, alpha: float, scores="hajek") -> float:
    """Same value in the form ``sum_i (y_i - x_i' b)(a(R_i) - abar)``."""
    b = np.asarray(b, dtype=float).reshape(data.p)
    r = data.y - data.X @ b
    w = rank_weights(data.n, alpha, scores)
    a = w[ranks(r) - 1]
    return float(r @ (a - w.mean()))


def dispersion_gradient(data: Dataset, b, alpha: float, scores="indicator") -> np.ndarray:
    """``-sum_i (x_i - xbar) a(R_i)``; with the indicator rule this is the
    right-limit selection ``-sum (x_i - xbar) I[R_i >= n*alpha]``."""
    r = _centered_residuals(data, b)
    w = rank_weights(data.n, alpha, scores)
    return -(w[ranks(r) - 1] @ data.x_centered)


def evaluate_dispersion(data: Dataset, b, alpha: float, scores="indicator") -> DispersionEvaluation:
    """Value and subgradient, flagging points where the rank selection is tied."""
    b = np.asarray(b, dtype=float).reshape(data.p)
    r = _centered_residuals(data, b)
    w = rank_weights(data.n, alpha, scores)
    rk = ranks(r)
    a = w[rk - 1]
    srt = np.sort(r)
    edges = np.flatnonzero(np.diff(w) != 0)
    scale = max(1.0, float(np.max(np.abs(r))))
    at_kink = bool(np.any(srt[edges + 1] - srt[edges] <= 1e-12 * scale))
    return DispersionEvaluation(b, float(r @ a), -(a @ data.x_centered), at_kink)


def _extreme_lp(data: Dataset) -> tuple[np.ndarray, bool]:
    """Solve ``min_b max_i [y_i - ybar - (x_i - xbar)' b]`` through its dual.

    Dual: ``max ytilde @ w`` s.t. ``sum w = 1``, ``Xtilde' w = 0``,
    ``w >= 0``; the multipliers are ``(t, b)``.
    """
    data.check_rank()
    yc = data.y - data.y.mean()
    A = np.vstack([np.ones(data.n), data.x_centered.T])
    rhs = np.zeros(data.p + 1)
    rhs[0] = 1.0
    sol = solve(LpProblem(yc, A, rhs, 0.0, np.inf, "maximize"))
    if not sol.optimal:
        raise LpError(f"minimax LP is {sol.status}")
    basic = [j for j in sol.basis if j < data.n]
    degenerate = len(basic) < data.p + 1 or bool(np.any(sol.variables[basic] < 1e-9))
    return sol.duals[1:].copy(), degenerate


def minimax_slope(data: Dataset) -> np.ndarray:
    """Slopes minimising the largest centred residual."""
    return _extreme_lp(data)[0]


def maximin_slope(data: Dataset) -> np.ndarray:
    """Slopes maximising the smallest centred residual (mirror of :func:`minimax_slope`)."""
    return -_extreme_lp(data.with_response(-data.y))[0]


def antirank(data: Dataset, b) -> int:
    """Index of the observation carrying the largest centred residual at ``b``."""
    return int(np.argmax(_centered_residuals(data, b)))


def _selected_count(n: int, alpha: float) -> int:
    return n - max(math.ceil(n * alpha - _EDGE_FUZZ * n), 1) + 1


def _fit_lp(data: Dataset, alpha: float, scores: str):
    n = data.n
    if scores == "hajek":
        na = n * alpha
        if na <= 1.0:
            b, deg = _extreme_lp(data.with_response(-data.y))
            return -b, deg
        if na >= n - 1.0:
            return _extreme_lp(data)
        fit = fit_rq(data, alpha)
        return fit.slopes, fit.degenerate
    m = _selected_count(n, alpha)
    if m >= n or m <= 0:
        # every b is optimal; report the minimum-norm point
        return np.zeros(data.p), True
    if m == 1:
        return _extreme_lp(data)
    fit = fit_rq(data, 1.0 - m / n)
    return fit.slopes, fit.degenerate


def _line_minimum(r0, s, w):
    """Exact minimiser of ``t -> sum_k w_k [sorted(r0 - t s)]_k`` (convex, PL).

    Returns ``(t, value, flat)`` where ``flat`` marks a minimising interval
    longer than 1e-6.
    """
    def phi(t):
        return float(np.sort(r0 - t * s) @ w)

    ds = s[:, None] - s[None, :]
    dr = r0[:, None] - r0[None, :]
    iu = np.triu_indices(r0.size, 1)
    ok = np.abs(ds[iu]) > 1e-300
    cands = np.unique(np.concatenate([[0.0], dr[iu][ok] / ds[iu][ok]]))
    lo, hi = 0, cands.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if phi(cands[mid + 1]) - phi(cands[mid]) >= 0:
            hi = mid
        else:
            lo = mid + 1
    t = float(cands[lo])
    v = phi(t)
    scale = max(1.0, abs(v))
    flat = False
    for nb in (lo - 1, lo + 1):
        if 0 <= nb < cands.size and abs(cands[nb] - t) > 1e-6 and abs(phi(cands[nb]) - v) < 1e-9 * scale:
            flat = True
    return t, v, flat


def _fit_descent(data: Dataset, alpha: float, scores, iterations: int = 200):
    """Polyak-step subgradient descent, then exact coordinate line searches."""
    w = rank_weights(data.n, alpha, scores)
    xc = data.x_centered
    yc = data.y - data.y.mean()
    if np.ptp(w) == 0.0:
        # constant weights: the dispersion vanishes identically
        return np.zeros(data.p), True
    g_floor = 1e-12 * float(np.abs(xc).sum())

    def value_grad(b):
        r = yc - xc @ b
        a = w[ranks(r) - 1]
        return float(r @ a), -(a @ xc)

    b = np.linalg.lstsq(xc, yc, rcond=None)[0]
    best_b, (best, _) = b.copy(), value_grad(b)
    gap = max(0.1 * abs(best), 1e-12)
    stall = 0
    for _ in range(iterations):
        val, g = value_grad(b)
        if val < best - 1e-15 * max(1.0, abs(best)):
            best, best_b, stall = val, b.copy(), 0
        else:
            stall += 1
            if stall >= 10:
                gap *= 0.5
                stall = 0
        gg = float(g @ g)
        if gg <= g_floor ** 2:
            break
        b = b - (val - best + gap) / gg * g

    b, cur = best_b, best
    flat = False
    for _ in range(100):
        improved = False
        for j in range(data.p):
            r0 = yc - xc @ b
            t, v, fl = _line_minimum(r0, xc[:, j], w)
            if v < cur - 1e-13 * max(1.0, abs(cur)):
                b = b.copy()
                b[j] += t
                cur, improved = v, True
            flat = fl
        if not improved:
            break
    return b, flat


def fit_r_estimator(data: Dataset, alpha: float, scores="hajek", method: str = "lp") -> REstimate:
    """R-estimator of the slopes: a global minimiser of the rank dispersion.

    ``method="lp"`` solves the equivalent regression-quantile LP exactly
    (with the minimax/maximin LPs at the extreme ends where ``n*alpha``
    leaves ``(1, n - 1)``); ``method="descent"`` runs subgradient descent
    with Polyak steps followed by exact coordinate-wise line searches and
    is exact for a single slope.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    data.check_rank()
    if method == "lp":
        if not isinstance(scores, str):
            raise ValueError("the LP route needs a named score rule")
        slopes, degenerate = _fit_lp(data, alpha, scores)
    elif method == "descent":
        slopes, degenerate = _fit_descent(data, alpha, scores)
    else:
        raise ValueError(f"unknown method {method!r}")
    return REstimate(
        alpha=float(alpha),
        slopes=np.asarray(slopes, dtype=float),
        objective=dispersion(data, slopes, alpha, scores),
        degenerate=bool(degenerate),
        scores=scores if isinstance(scores, str) else "custom",
        method=method,
    )


def r_estimator_process(data: Dataset, alpha_grid, scores="hajek",
                        method: str = "lp", tol: float = 1e-7) -> ProcessTrajectory:
    """R-estimates on ``alpha_grid`` compressed into constant segments.

    A new segment starts at the first grid node whose slopes differ from the
    previous node by more than ``tol``; the breakpoint is placed on the last
    node of the old segment, so every grid node evaluates to its own fit.
    """
    grid = np.asarray(alpha_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("alpha_grid must be a non-empty increasing vector")
    fits = [fit_r_estimator(data, float(a), scores, method) for a in grid]
    breaks, values = [], [fits[0].slopes]
    for prev_a, f in zip(grid[:-1], fits[1:]):
        if np.max(np.abs(f.slopes - values[-1]), initial=0.0) > tol:
            breaks.append(prev_a)
            values.append(f.slopes)
    return ProcessTrajectory(
        breakpoints=np.array(breaks),
        slopes=np.array(values).reshape(len(values), data.p),
        intercepts=None,
        source="r_estimator",
        meta={
            "grid": grid.tolist(),
            "objective": [f.objective for f in fits],
            "degenerate": [f.degenerate for f in fits],
        },
    )
