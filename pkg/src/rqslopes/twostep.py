"""Two-step regression quantiles: rank-estimated slopes, then a residual quantile."""

from __future__ import annotations

import math

import numpy as np

from .data import Dataset
from .jaeckel import fit_r_estimator
from .quantreg import ProcessTrajectory, QuantileFit, check_loss

DEFAULT_SLOPE_ALPHA = 0.5
_CEIL_FUZZ = 1e-9
_TIE_RTOL = 1e-9


def order_index(n: int, alpha: float) -> int:
    """``ceil(n * alpha)`` clamped to 1..n, forgiving float noise such as 30 * 0.9."""
    k = math.ceil(n * alpha - _CEIL_FUZZ * n)
    return min(max(k, 1), n)


def empirical_quantile(values, alpha: float) -> float:
    """Left-continuous empirical quantile: the ``ceil(n*alpha)``-th order statistic."""
    v = np.sort(np.asarray(values, dtype=float))
    return float(v[order_index(v.size, alpha) - 1])


def resolve_slopes(data: Dataset, slope_rule="r_estimator", alpha: float = DEFAULT_SLOPE_ALPHA):
    """``"r_estimator"`` -> R-estimate at ``alpha``; an array -> fixed slopes."""
    if isinstance(slope_rule, str):
        if slope_rule != "r_estimator":
            raise ValueError(f"unknown slope rule {slope_rule!r}")
        return fit_r_estimator(data, alpha).slopes
    b = np.asarray(slope_rule, dtype=float).reshape(data.p)
    return b


def two_step_fit(data: Dataset, alpha: float, slope_rule="r_estimator") -> QuantileFit:
    """Two-step alpha-regression quantile.

    With ``slope_rule="r_estimator"`` the slopes are the R-estimate at the
    same ``alpha``; pass a vector to hold them fixed. The fit carries no
    dual scores (``dual_scores`` is empty).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    slopes = resolve_slopes(data, slope_rule, alpha)
    partial = data.y - data.X @ slopes
    intercept = empirical_quantile(partial, alpha)
    residuals = partial - intercept
    return QuantileFit(
        alpha=float(alpha),
        intercept=intercept,
        slopes=slopes,
        residuals=residuals,
        dual_scores=np.empty(0),
        objective=check_loss(residuals, alpha),
    )


def two_step_process(data: Dataset, slope_rule="r_estimator") -> ProcessTrajectory:
    """Intercept path ``alpha -> r_(ceil(n alpha))`` with one fixed slope estimate.

    The trajectory always has ``n`` nominal segments separated at ``k/n``;
    ``meta["distinct_segments"]`` counts those left after tied residuals
    (equal up to ``1e-9`` relative) collapse neighbouring steps. An exact
    R-estimate interpolates ``p`` residual ties, so with estimated slopes
    generic data give ``n - p`` distinct steps; fixed generic slopes give ``n``.
    """
    slopes = resolve_slopes(data, slope_rule)
    n = data.n
    partial = np.sort(data.y - data.X @ slopes)
    traj = ProcessTrajectory(
        breakpoints=np.arange(1, n) / n,
        slopes=np.tile(slopes, (n, 1)),
        intercepts=partial,
        source="two_step",
    )
    scale = max(1.0, float(np.max(np.abs(partial))))
    distinct = 1 + int(np.sum(np.diff(partial) > _TIE_RTOL * scale))
    traj.meta.update(nominal_segments=n, distinct_segments=distinct)
    return traj
