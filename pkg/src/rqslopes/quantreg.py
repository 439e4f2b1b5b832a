"""Regression quantiles, their process over alpha, and the population counterpart.

The fit is computed from the dual of the check-loss problem,

    maximize  y @ a   subject to  Z.T @ a = (1 - alpha) * Z.T @ 1,  0 <= a <= 1,

with ``Z = [1, X]``. The simplex multipliers of the equality rows are the
regression-quantile coefficients, the reduced costs are the residuals and
the optimal ``a`` are the regression rank scores, so one solve gives all
three.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .distributions import ErrorModel
from .lp import LpError, LpProblem, solve

ZERO_RESIDUAL_RTOL = 1e-7
_PROCESS_END_POINTS = (1e-6, 1e-5, 1e-4, 1e-3)


def check_loss(residuals, alpha: float) -> float:
    r = np.asarray(residuals, dtype=float)
    return float(alpha * r[r > 0].sum() - (1.0 - alpha) * r[r < 0].sum())


def residual_tolerance(y) -> float:
    q75, q25 = np.percentile(y, [75, 25])
    iqr = q75 - q25
    return ZERO_RESIDUAL_RTOL * (iqr if iqr > 0 else max(1.0, float(np.max(np.abs(y)))))


@dataclass
class QuantileFit:
    alpha: float
    intercept: float
    slopes: np.ndarray
    residuals: np.ndarray
    dual_scores: np.ndarray
    objective: float
    basis: tuple[int, ...] = ()
    degenerate: bool = False

    @property
    def coefficients(self) -> np.ndarray:
        return np.concatenate([[self.intercept], self.slopes])


def _dual_problem(data: Dataset, alpha: float) -> LpProblem:
    Z = data.design
    return LpProblem(
        objective=data.y,
        constraint_matrix=Z.T,
        rhs=(1.0 - alpha) * Z.sum(axis=0),
        lower_bounds=0.0,
        upper_bounds=1.0,
        sense="maximize",
    )


def pilot_start(data: Dataset, alpha: float) -> np.ndarray:
    """Starting bound pattern from least-squares residual ranks."""
    coef = np.linalg.lstsq(data.design, data.y, rcond=None)[0]
    r = data.y - data.design @ coef
    order = np.argsort(r, kind="stable")
    start = np.zeros(data.n, dtype=bool)
    start[order[int(np.floor(data.n * alpha)):]] = True
    return start


def fit_rq(data: Dataset, alpha: float, start=None) -> QuantileFit:
    """Regression alpha-quantile with its regression rank scores.

    ``start`` is an optional boolean vector of observations whose dual score
    starts at 1 (e.g. ``previous_fit.dual_scores > 0.5`` when sweeping alpha);
    it affects speed only, plus the choice of vertex when the optimum is not
    unique.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    data.check_rank()
    if start is None:
        start = pilot_start(data, alpha)
    sol = solve(_dual_problem(data, alpha), at_upper=start)
    if not sol.optimal:
        raise LpError(f"quantile-regression dual is {sol.status} at alpha={alpha}")
    coef = sol.duals
    residuals = data.y - data.design @ coef
    scores = np.clip(sol.variables, 0.0, 1.0)
    basic = [j for j in sol.basis if j < data.n]
    # a basic score sitting on a bound signals a degenerate (possibly non-unique) fit
    degenerate = len(basic) < data.p + 1 or bool(
        np.any(np.minimum(scores[basic], 1.0 - scores[basic]) < 1e-9)
    )
    return QuantileFit(
        alpha=float(alpha),
        intercept=float(coef[0]),
        slopes=coef[1:].copy(),
        residuals=residuals,
        dual_scores=scores,
        objective=check_loss(residuals, alpha),
        basis=tuple(basic),
        degenerate=degenerate,
    )


@dataclass
class ProcessTrajectory:
    """Piecewise-constant coefficient path over alpha.

    Segment ``j`` covers ``(breakpoints[j-1], breakpoints[j]]`` (left-open,
    right-closed), with the first segment starting at 0 and the last ending
    at 1. ``intercepts`` is ``None`` for slope-only processes.
    """

    breakpoints: np.ndarray
    slopes: np.ndarray
    intercepts: np.ndarray | None
    source: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=float).ravel()
        self.slopes = np.asarray(self.slopes, dtype=float)
        if self.slopes.ndim == 1:
            self.slopes = self.slopes.reshape(-1, 1) if self.slopes.size else (
                np.empty((self.breakpoints.size + 1, 0)))
        if self.intercepts is not None:
            self.intercepts = np.asarray(self.intercepts, dtype=float).ravel()
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if self.slopes.shape[0] != self.breakpoints.size + 1:
            raise ValueError("need exactly one segment more than breakpoints")

    @property
    def n_segments(self) -> int:
        return self.slopes.shape[0]

    @property
    def segments(self) -> np.ndarray:
        """Per-segment coefficient rows (intercept first when present)."""
        if self.intercepts is None:
            return self.slopes
        return np.column_stack([self.intercepts, self.slopes])

    @property
    def n_distinct_segments(self) -> int:
        seg = self.segments
        if len(seg) < 2:
            return len(seg)
        return 1 + int(np.sum(np.any(seg[1:] != seg[:-1], axis=1)))

    def segment_index(self, alpha):
        return np.searchsorted(self.breakpoints, alpha, side="left")

    def slopes_at(self, alpha) -> np.ndarray:
        return self.slopes[self.segment_index(alpha)]

    def intercept_at(self, alpha):
        if self.intercepts is None:
            raise ValueError(f"{self.source} trajectory carries no intercept")
        return self.intercepts[self.segment_index(alpha)]

    def evaluate(self, alpha) -> np.ndarray:
        return self.segments[self.segment_index(alpha)]


def _process_grid(n: int, grid_points: int | None) -> np.ndarray:
    g = grid_points or max(101, 4 * n + 1)
    inner = np.linspace(0.0, 1.0, g + 2)[1:-1]
    ends = np.array(_PROCESS_END_POINTS)
    return np.unique(np.concatenate([ends, inner, 1.0 - ends]))


def rq_process(data: Dataset, grid_points: int | None = None,
               width: float = 1e-10) -> ProcessTrajectory:
    """Full regression-quantile process as a step function of alpha.

    Coefficients are computed on a grid (uniform plus a few points close to
    0 and 1); where neighbouring nodes disagree the jump is bisected to
    ``width``. The breakpoint is reported at the centre of the final
    bracket, and each segment's value is the fit at its interior midpoint.
    """
    data.check_rank()
    scale = max(1.0, float(np.max(np.abs(data.y))))
    tol = 1e-9 * scale
    cache: dict[float, np.ndarray] = {}

    def coef(a: float) -> np.ndarray:
        if a not in cache:
            cache[a] = fit_rq(data, a).coefficients
        return cache[a]

    def same(a: float, b: float) -> bool:
        return bool(np.max(np.abs(coef(a) - coef(b))) <= tol)

    def split(lo: float, hi: float, out: list):
        if same(lo, hi):
            return
        if hi - lo <= width:
            out.append(0.5 * (lo + hi))
            return
        mid = 0.5 * (lo + hi)
        split(lo, mid, out)
        split(mid, hi, out)

    grid = _process_grid(data.n, grid_points)
    cuts: list[float] = []
    for lo, hi in zip(grid[:-1], grid[1:]):
        split(float(lo), float(hi), cuts)

    # a grid node sitting exactly on a jump yields two cuts hugging it
    merged: list[float] = []
    for c in cuts:
        if merged and c - merged[-1] <= 4 * width:
            merged[-1] = 0.5 * (merged[-1] + c)
        else:
            merged.append(c)

    edges = [float(grid[0]), *merged, float(grid[-1])]
    breaks: list[float] = []
    values: list[np.ndarray] = []
    for i, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        if i == 0:
            mid = lo
        elif i == len(edges) - 2:
            mid = hi
        else:
            mid = 0.5 * (lo + hi)
        c = coef(mid)
        if values and np.max(np.abs(c - values[-1])) <= tol:
            continue
        if values:
            breaks.append(lo)
        values.append(c)
    seg = np.array(values)
    return ProcessTrajectory(
        breakpoints=np.array(breaks),
        slopes=seg[:, 1:],
        intercepts=seg[:, 0],
        source="regression_quantile",
        meta={"grid_points": int(grid.size), "fits": len(cache)},
    )


def population_truth(model: ErrorModel, beta0: float, beta, alpha: float):
    """Population regression quantile: ``(beta0 + F^{-1}(alpha), beta)``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    return float(beta0 + model.quantile(alpha)), np.array(beta, dtype=float, copy=True)
