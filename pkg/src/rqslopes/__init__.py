"""Regression-quantile and rank-score processes with Monte Carlo checks of their limit theory."""

__version__ = "0.1.0"

from .data import Dataset, RankDeficiencyError, SchemaError, read_csv, write_csv
from .distributions import BUILTIN_MODELS, ErrorModel, error_model
from .jaeckel import (
    dispersion, dispersion_gradient, fit_r_estimator, maximin_slope, minimax_slope,
    r_estimator_process,
)
from .lp import LpProblem, LpSolution, solve, solve_parametric
from .quantreg import ProcessTrajectory, QuantileFit, fit_rq, rq_process
from .rank_scores import hajek_scores_closed_form, rank_scores_lp, regression_rank_scores
from .twostep import two_step_fit, two_step_process
