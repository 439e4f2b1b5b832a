"""Seeded replicate engine for the limit-theory checks.

Random numbers come from a Philox counter-based generator keyed by
``(seed, replicate)``: errors use the base stream and covariates a jumped
stream, so every replicate is reproducible on its own and results do not
depend on the order (or thread) in which replicates run. All samples are
drawn by inverse-cdf from uniforms strictly inside (0, 1).
"""

from __future__ import annotations

import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np
from scipy import stats

from .asymptotics import (
    DEFAULT_B_EXPONENT, DEFAULT_K, alpha_star, bahadur_residual, design_summary,
    linearity_residual, sigma_alpha, standardize_slopes,
)
from .data import Dataset, RankDeficiencyError
from .distributions import BUILTIN_MODELS, error_model
from .jaeckel import fit_r_estimator
from .lp import LpError, LpIterationLimit
from .quantreg import fit_rq
from .rank_scores import score_statistics
from .twostep import two_step_fit

log = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.01
STUDIES = ("bridge", "drift", "rate", "twostep")
DESIGNS = ("iid_uniform", "iid_normal")
ESTIMATORS = ("rq", "r_estimator")
_FIT_ERRORS = (LpError, LpIterationLimit, RankDeficiencyError, np.linalg.LinAlgError)


class ConfigError(ValueError):
    pass


class StudyAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    n: int
    p: int
    replicates: int
    error_model: str = "logistic"
    design: str = "iid_uniform"
    design_path: str | None = None
    beta0: float = 0.0
    beta: tuple = ()
    alpha_grid: tuple = (0.1, 0.25, 0.5, 0.75, 0.9)
    seed: int = 0
    b_exponent: float = DEFAULT_B_EXPONENT
    shift: tuple | None = None
    estimator: str = "rq"
    study: str = "bridge"
    n_values: tuple = ()
    radius: float = DEFAULT_K
    bahadur_alpha: float = 0.5

    def __post_init__(self):
        validate(self)

    @property
    def beta_vector(self) -> np.ndarray:
        return np.asarray(self.beta, dtype=float) if self.beta else np.zeros(self.p)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def validate(cfg: SimConfig):
    if not isinstance(cfg.n, int) or cfg.n < 3:
        _fail("n", "must be an integer >= 3")
    if not isinstance(cfg.p, int) or cfg.p < 1:
        _fail("p", "must be an integer >= 1")
    if cfg.n <= cfg.p + 1:
        _fail("n", "must exceed p + 1")
    if not isinstance(cfg.replicates, int) or cfg.replicates < 1:
        _fail("replicates", "must be an integer >= 1")
    if cfg.error_model not in BUILTIN_MODELS:
        _fail("error_model", f"must be one of {list(BUILTIN_MODELS)}")
    if cfg.design not in (*DESIGNS, "fixed_matrix"):
        _fail("design", f"must be one of {[*DESIGNS, 'fixed_matrix']}")
    if cfg.design == "fixed_matrix" and not cfg.design_path:
        _fail("design_path", "required when design is fixed_matrix")
    if cfg.beta and len(cfg.beta) != cfg.p:
        _fail("beta", f"needs {cfg.p} entries")
    grid = np.asarray(cfg.alpha_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        _fail("alpha_grid", "must be a non-empty list")
    for i, a in enumerate(grid):
        if not 0.0 < a < 1.0:
            _fail(f"alpha_grid[{i}]", "must lie in (0, 1)")
        if i and a <= grid[i - 1]:
            _fail(f"alpha_grid[{i}]", "must be strictly increasing")
    if not 0 <= cfg.seed < 2 ** 64:
        _fail("seed", "must be a 64-bit unsigned integer")
    model = error_model(cfg.error_model)
    if not cfg.b_exponent > model.tail_exponent_a:
        _fail("b_exponent", f"must exceed the model tail exponent a={model.tail_exponent_a}")
    if cfg.shift is not None and len(cfg.shift) != cfg.p:
        _fail("shift", f"needs {cfg.p} entries")
    if cfg.estimator not in ESTIMATORS:
        _fail("estimator", f"must be one of {list(ESTIMATORS)}")
    if cfg.study not in STUDIES:
        _fail("study", f"must be one of {list(STUDIES)}")
    if cfg.study in ("rate", "twostep"):
        if not cfg.n_values:
            _fail("n_values", f"required for the {cfg.study} study")
        for i, m in enumerate(cfg.n_values):
            if not isinstance(m, int) or m <= cfg.p + 1:
                _fail(f"n_values[{i}]", "must be an integer exceeding p + 1")
    if cfg.radius <= 0:
        _fail("radius", "must be positive")
    if not 0.0 < cfg.bahadur_alpha < 1.0:
        _fail("bahadur_alpha", "must lie in (0, 1)")


def config_from_mapping(raw: dict) -> SimConfig:
    known = set(SimConfig.__dataclass_fields__)
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown key")
    for key in ("n", "p", "replicates"):
        if key not in raw:
            raise ConfigError(f"{key}: required key missing")
    kw = dict(raw)
    for key in ("beta", "alpha_grid", "n_values", "shift"):
        if key in kw and kw[key] is not None:
            if not isinstance(kw[key], (list, tuple)):
                raise ConfigError(f"{key}: must be a list")
            kw[key] = tuple(kw[key])
    return SimConfig(**kw)


def load_config(path) -> SimConfig:
    """Read a SimConfig from a JSON or YAML key-value file."""
    path = Path(path)
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml
        raw = yaml.safe_load(text)
    else:
        raw = json.loads(text)
    if not isinstance(raw, dict):
        raise ConfigError("<root>: expected a mapping")
    if raw.get("design_path") and not Path(raw["design_path"]).is_absolute():
        raw["design_path"] = str(path.parent / raw["design_path"])
    return config_from_mapping(raw)


# -- data generation --------------------------------------------------------

def replicate_key(seed: int, replicate: int) -> np.ndarray:
    return np.array([seed, replicate], dtype=np.uint64)


def _uniforms(bitgen: np.random.Philox, size) -> np.ndarray:
    k = np.random.Generator(bitgen).integers(0, 2 ** 53, size=size, dtype=np.int64)
    return (k + 0.5) / 2.0 ** 53


def _load_matrix(path: str, n: int, p: int) -> np.ndarray:
    if path.endswith(".npy"):
        M = np.load(path)
    else:
        try:
            M = np.loadtxt(path, delimiter=",", ndmin=2)
        except ValueError:
            M = np.loadtxt(path, delimiter=",", ndmin=2, skiprows=1)
    if M.shape[0] < n or M.shape[1] < p:
        raise ValueError(f"{path}: need at least {n}x{p}, found {M.shape}")
    return M[:n, :p]


def generate(config: SimConfig, replicate: int) -> Dataset:
    """Dataset for one replicate; bit-identical for a given ``(seed, replicate)``."""
    n, p = config.n, config.p
    base = np.random.Philox(key=replicate_key(config.seed, replicate))
    model = error_model(config.error_model)
    e = model.quantile(_uniforms(base, n))
    if config.design == "fixed_matrix":
        X = _load_matrix(config.design_path, n, p)
    else:
        u = _uniforms(base.jumped(1), (n, p))
        X = u if config.design == "iid_uniform" else stats.norm.ppf(u)
    y = config.beta0 + X @ config.beta_vector + e
    if config.shift is not None:
        y = y + X @ np.asarray(config.shift, dtype=float) / np.sqrt(n)
    return Dataset(y, X)


# -- replicate orchestration ------------------------------------------------

@dataclass
class ReplicateFailure:
    replicate: int
    seed: int
    error: str


def run_replicates(config: SimConfig, fn: Callable[[Dataset], Any], threads: int = 1):
    """Apply ``fn`` to every replicate; results come back in replicate order.

    Fit failures are logged with the replicate key for replay and skipped;
    more than 1% failures abort the study.
    """
    def one(r):
        try:
            return fn(generate(config, r))
        except _FIT_ERRORS as exc:
            log.warning("replicate %d (seed %d) failed: %s", r, config.seed, exc)
            return ReplicateFailure(r, config.seed, f"{type(exc).__name__}: {exc}")

    idx = range(config.replicates)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(one, idx))
    else:
        out = [one(r) for r in idx]
    failures = [o for o in out if isinstance(o, ReplicateFailure)]
    if len(failures) > MAX_FAILURE_FRACTION * config.replicates:
        raise StudyAborted(
            f"{len(failures)} of {config.replicates} replicates failed; first: {failures[0]}"
        )
    return [o for o in out if not isinstance(o, ReplicateFailure)], failures


def slope_path(data: Dataset, grid, estimator: str = "rq") -> np.ndarray:
    """(G, p) slopes of the chosen estimator on ``grid``."""
    if estimator == "rq":
        return np.array([fit_rq(data, a).slopes for a in grid])
    return np.array([fit_r_estimator(data, a).slopes for a in grid])


# -- Brownian-bridge diagnostics --------------------------------------------

def bridge_covariance(s, t):
    s, t = np.asarray(s, dtype=float), np.asarray(t, dtype=float)
    return np.minimum(s, t) - s * t


@dataclass
class BridgeDiagnostics:
    grid: np.ndarray
    cov_empirical: np.ndarray
    cross_cov_max: float
    ks_stats: np.ndarray
    replicates_used: int
    mean: np.ndarray
    reference_cov: np.ndarray
    max_cov_deviation: float
    ks_alpha: float

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.tolist(),
            "replicates_used": self.replicates_used,
            "cov_empirical": self.cov_empirical.tolist(),
            "reference_cov": self.reference_cov.tolist(),
            "max_cov_deviation": self.max_cov_deviation,
            "cross_cov_max": self.cross_cov_max,
            "ks_alpha": self.ks_alpha,
            "ks_stats": self.ks_stats.tolist(),
            "mean": self.mean.tolist(),
        }

    def cov_at(self, s: float, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.grid - s)))
        j = int(np.argmin(np.abs(self.grid - t)))
        return self.cov_empirical[i, j]


def bridge_diagnostics(samples, grid) -> BridgeDiagnostics:
    """Compare replicate paths ``samples[r, g, j]`` with independent Brownian bridges."""
    samples = np.asarray(samples, dtype=float)
    grid = np.asarray(grid, dtype=float)
    R, G, p = samples.shape
    ref = bridge_covariance(grid[:, None], grid[None, :])
    if R < 2:
        warnings.warn("fewer than two replicates: covariance diagnostics are degenerate (zero)")
        cov = np.zeros((G, G, p))
        cross = 0.0
    else:
        centered = samples - samples.mean(axis=0)
        # cov[g, h, j] over replicates, summed in replicate order
        cov = np.einsum("rgj,rhj->ghj", centered, centered) / (R - 1)
        cross = 0.0
        if p > 1:
            cc = np.einsum("rgj,rgk->gjk", centered, centered) / (R - 1)
            off = ~np.eye(p, dtype=bool)
            cross = float(np.abs(cc[:, off]).max())
    g_half = int(np.argmin(np.abs(grid - 0.5)))
    a = grid[g_half]
    ref_sd = np.sqrt(a * (1 - a))
    ks = np.array([stats.kstest(samples[:, g_half, j], "norm", args=(0.0, ref_sd)).statistic
                   for j in range(p)])
    return BridgeDiagnostics(
        grid=grid,
        cov_empirical=cov,
        cross_cov_max=cross,
        ks_stats=ks,
        replicates_used=R,
        mean=samples.mean(axis=0),
        reference_cov=ref,
        max_cov_deviation=float(np.abs(cov - ref[:, :, None]).max()),
        ks_alpha=float(a),
    )


@dataclass
class BridgeStudy:
    """Slope-process and score-process diagnostics from one set of replicates."""

    slope: BridgeDiagnostics
    score: BridgeDiagnostics
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "study": "bridge",
            "slope_process": self.slope.to_dict(),
            "score_process": self.score.to_dict(),
            "failures": [asdict(f) for f in self.failures],
        }


def _score_process(data: Dataset, config: SimConfig, grid, summary) -> np.ndarray:
    """``n^{1/2} Q_n^{-1/2} A_{n alpha}(0)`` at the true coefficients (shift not removed)."""
    e = data.y - data.X @ config.beta_vector
    A = score_statistics(e, data.x_centered, grid)
    return np.sqrt(data.n) * A @ summary.q_inverse_sqrt


def run_bridge_study(config: SimConfig, threads: int = 1) -> BridgeStudy:
    grid = np.asarray(config.alpha_grid, dtype=float)
    lo = alpha_star(config.n, config.b_exponent)
    if grid[0] < lo or grid[-1] > 1 - lo:
        raise ConfigError(f"alpha_grid: must lie in [alpha_n*, 1 - alpha_n*], alpha_n* = {lo:.6g}")
    model = error_model(config.error_model)
    beta = config.beta_vector

    def one(data: Dataset):
        summary = design_summary(data)
        W = standardize_slopes(data, slope_path(data, grid, config.estimator), model, beta,
                               grid, summary)
        return W, _score_process(data, config, grid, summary)

    results, failures = run_replicates(config, one, threads)
    W = np.stack([r[0] for r in results])
    S = np.stack([r[1] for r in results])
    return BridgeStudy(bridge_diagnostics(W, grid), bridge_diagnostics(S, grid), failures)


# -- contiguous-shift drift -------------------------------------------------

@dataclass
class DriftReport:
    grid: np.ndarray
    empirical_mean: np.ndarray
    predicted: np.ndarray
    standard_error: np.ndarray
    replicates_used: int
    failures: list = field(default_factory=list)

    @property
    def z_scores(self) -> np.ndarray:
        se = np.where(self.standard_error > 0, self.standard_error, np.inf)
        return (self.empirical_mean - self.predicted) / se

    @property
    def max_abs_deviation(self) -> float:
        return float(np.abs(self.empirical_mean - self.predicted).max())

    def to_dict(self) -> dict:
        return {
            "study": "drift",
            "grid": self.grid.tolist(),
            "replicates_used": self.replicates_used,
            "empirical_mean": self.empirical_mean.tolist(),
            "predicted": self.predicted.tolist(),
            "standard_error": self.standard_error.tolist(),
            "z_scores": self.z_scores.tolist(),
            "max_abs_deviation": self.max_abs_deviation,
            "max_abs_z": float(np.abs(self.z_scores).max()),
            "failures": [asdict(f) for f in self.failures],
        }


def run_drift_study(config: SimConfig, threads: int = 1) -> DriftReport:
    """Mean of the score process under ``Y = Y0 + n^{-1/2} x' shift`` versus its predicted drift.

    The statistic is computed at the unshifted ``beta``; the prediction is
    ``f(F^{-1}(alpha)) n^{-1/2} Q_n^{1/2} shift``, averaged over replicates
    (the design is random).
    """
    shift = np.zeros(config.p) if config.shift is None else np.asarray(config.shift, dtype=float)
    grid = np.asarray(config.alpha_grid, dtype=float)
    model = error_model(config.error_model)
    dens = model.density_at_quantile(grid)

    def one(data: Dataset):
        summary = design_summary(data)
        stat = _score_process(data, config, grid, summary)
        pred = np.outer(dens, summary.q_sqrt @ shift) / np.sqrt(data.n)
        return stat, pred

    results, failures = run_replicates(config, one, threads)
    S = np.stack([r[0] for r in results])
    P = np.stack([r[1] for r in results])
    R = S.shape[0]
    se = S.std(axis=0, ddof=1) / np.sqrt(R) if R > 1 else np.zeros(S.shape[1:])
    return DriftReport(grid, S.mean(axis=0), P.mean(axis=0), se, R, failures)


# -- rates over n -----------------------------------------------------------

@dataclass
class RateRow:
    n: int
    median_sup_error: float
    median_bahadur: float
    median_linearity_standardized: float
    median_linearity_density: float
    replicates_used: int


@dataclass
class RateReport:
    rows: list
    failures: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def to_dict(self) -> dict:
        return {
            "study": "rate",
            "rows": [asdict(r) for r in self.rows],
            "failures": [asdict(f) for f in self.failures],
        }


def run_rate_study(config: SimConfig, threads: int = 1, linearity: bool = True) -> RateReport:
    """Medians over replicates, for each ``n`` in ``config.n_values``, of

    * ``sup_alpha n^{1/2} sigma_alpha^{-1} ||beta_hat - beta||`` over the grid,
    * the Bahadur residual at ``bahadur_alpha``,
    * both linearity residuals (radius ``config.radius``, same grid).

    Every ``n`` reuses the same seed, so replicate ``r`` has the same key
    at each sample size.
    """
    model = error_model(config.error_model)
    grid = np.asarray(config.alpha_grid, dtype=float)
    beta = config.beta_vector
    sig = sigma_alpha(model, grid)
    rows, all_failures = [], []
    for n in config.n_values:
        cfg = replace(config, n=int(n))

        def one(data: Dataset):
            slopes = slope_path(data, grid, "r_estimator")
            err = np.sqrt(data.n) * np.linalg.norm(slopes - beta, axis=1) / sig
            hit = np.flatnonzero(np.isclose(grid, cfg.bahadur_alpha))
            bslopes = slopes[hit[0]] if hit.size else None
            bah = bahadur_residual(data, model, beta, cfg.bahadur_alpha, cfg.b_exponent, bslopes)
            if linearity:
                l22 = linearity_residual(data, model, cfg.radius, grid, "standardized", beta,
                                         b=cfg.b_exponent)
                l228 = linearity_residual(data, model, cfg.radius, grid, "density", beta)
            else:
                l22 = l228 = np.nan
            return err.max(), bah, l22, l228

        results, failures = run_replicates(cfg, one, threads)
        arr = np.array(results)
        med = np.median(arr, axis=0)
        rows.append(RateRow(int(n), *map(float, med), replicates_used=len(results)))
        all_failures.extend(failures)
    return RateReport(rows, all_failures)


# -- two-step versus ordinary regression quantiles --------------------------

def run_twostep_study(config: SimConfig, threads: int = 1) -> dict:
    """Median over replicates of ``sqrt(n) max_alpha ||two-step - rq||`` for each ``n``.

    Two-step slopes are the R-estimate at 1/2, held fixed over alpha.
    """
    grid = np.asarray(config.alpha_grid, dtype=float)
    rows = []
    failures_all = []
    for n in config.n_values:
        cfg = replace(config, n=int(n))

        def one(data: Dataset):
            slopes = fit_r_estimator(data, 0.5).slopes
            gaps = [np.linalg.norm(two_step_fit(data, a, slopes).coefficients
                                   - fit_rq(data, a).coefficients) for a in grid]
            return np.sqrt(data.n) * max(gaps)

        results, failures = run_replicates(cfg, one, threads)
        rows.append({"n": int(n), "median_scaled_gap": float(np.median(results)),
                     "replicates_used": len(results)})
        failures_all.extend(asdict(f) for f in failures)
    return {"study": "twostep", "rows": rows, "failures": failures_all}


def run_study(config: SimConfig, threads: int = 1):
    if config.study == "bridge":
        return run_bridge_study(config, threads)
    if config.study == "drift":
        return run_drift_study(config, threads)
    if config.study == "rate":
        return run_rate_study(config, threads)
    return run_twostep_study(config, threads)
