"""Command-line interface: ``rqslopes {fit,process,scores,restimate,simulate,check}``.

Every artifact carries a run manifest (command, config digest, tool
version, input digests, timestamps): a ``"manifest"`` key in JSON, a
leading ``# manifest {...}`` comment line in CSV and a ``<metadata>``
block in SVG. Everything except the timestamps is a function of the
inputs, so reruns are byte-identical once those are removed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import (
    DEFAULT_B_EXPONENT, DEFAULT_EPSILON, alpha_star, check_f3, design_summary, sigma_alpha,
)
from .data import Dataset, RankDeficiencyError, SchemaError, read_csv
from .distributions import BUILTIN_MODELS, error_model
from .jaeckel import fit_r_estimator, r_estimator_process
from .lp import LpError
from .montecarlo import (
    BridgeStudy, ConfigError, DriftReport, RateReport, StudyAborted, load_config, run_study,
)
from .quantreg import rq_process, fit_rq
from .rank_scores import ranks
from .svg import heatmap, step_plot
from .twostep import two_step_fit, two_step_process

SCHEMA_VERSION = 1
FIT_METHODS = ("rq", "rtwostep", "jaeckel")
SIGMA_TABLE_ALPHAS = (0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99)
TIMESTAMP_KEYS = ("timestamps",)

log = logging.getLogger("rqslopes")


# -- manifest ---------------------------------------------------------------

def _sha256_bytes(b: bytes) -> str:
    return hashlib.sha256(b).hexdigest()


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: dict = field(default_factory=dict)
    tool_version: str = __version__
    started: str = field(default_factory=_now)

    @property
    def config_digest(self) -> str:
        return _sha256_bytes(canonical_json(self.config).encode())

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "tool_version": self.tool_version,
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "config_digest": self.config_digest,
            "input_digests": {k: self.inputs[k] for k in sorted(self.inputs)},
            "timestamps": {"started": self.started, "finished": _now()},
        }


def strip_timestamps(doc):
    """Copy of a JSON document without timestamp entries (for comparisons)."""
    if isinstance(doc, dict):
        return {k: strip_timestamps(v) for k, v in doc.items() if k not in TIMESTAMP_KEYS}
    if isinstance(doc, list):
        return [strip_timestamps(v) for v in doc]
    return doc


# -- output helpers ---------------------------------------------------------

def fmt(v) -> str:
    """Shortest round-trip text for a number; blank for missing."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "nan" if np.isnan(v) else repr(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def json_text(doc: dict) -> str:
    return json.dumps(_jsonable(doc), indent=2, sort_keys=False) + "\n"


def csv_text(manifest: dict, header, rows) -> str:
    buf = io.StringIO()
    buf.write("# manifest " + canonical_json(_jsonable(manifest)) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    return buf.getvalue()


def read_csv_manifest(path) -> dict | None:
    with open(path) as fh:
        first = fh.readline()
    if first.startswith("# manifest "):
        return json.loads(first[len("# manifest "):])
    return None


def emit(text: str, out: str | None):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _load(path: str, response: str):
    data, names = read_csv(path, response=response)
    return data, names, {Path(path).name: file_digest(path)}


def _residual_summary(r: np.ndarray, tol: float = 1e-9) -> dict:
    scale = max(1.0, float(np.max(np.abs(r)))) if r.size else 1.0
    q = np.quantile(r, [0.0, 0.25, 0.5, 0.75, 1.0]) if r.size else [np.nan] * 5
    return {
        "min": q[0], "q1": q[1], "median": q[2], "q3": q[3], "max": q[4],
        "n_zero": int(np.sum(np.abs(r) <= tol * scale)),
        "n_positive": int(np.sum(r > tol * scale)),
        "n_negative": int(np.sum(r < -tol * scale)),
    }


# -- fit ----------------------------------------------------------------------

def fit_report(data: Dataset, names, alpha: float, method: str) -> dict:
    """Library-level coefficient report shared by ``cmd_fit`` and its tests."""
    if method == "rq":
        fit = fit_rq(data, alpha)
        report = {
            "intercept": fit.intercept,
            "slopes": dict(zip(names, fit.slopes)),
            "objective": fit.objective,
            "degenerate": fit.degenerate,
            "residual_summary": _residual_summary(fit.residuals),
            "dual_scores": fit.dual_scores,
        }
    elif method == "rtwostep":
        fit = two_step_fit(data, alpha)
        report = {
            "intercept": fit.intercept,
            "slopes": dict(zip(names, fit.slopes)),
            "objective": fit.objective,
            "residual_summary": _residual_summary(fit.residuals),
        }
    elif method == "jaeckel":
        est = fit_r_estimator(data, alpha)
        r = data.y - data.X @ est.slopes
        report = {
            "intercept": None,
            "slopes": dict(zip(names, est.slopes)),
            "objective": est.objective,
            "degenerate": est.degenerate,
            "scores": est.scores,
            "residual_summary": _residual_summary(r - np.median(r)),
        }
    else:
        raise ValueError(f"unknown method {method!r}")
    return {"method": method, "alpha": float(alpha), "n": data.n, "p": data.p, **report}


def cmd_fit(args) -> int:
    data, names, inputs = _load(args.csv, args.response_col)
    report = fit_report(data, names, args.alpha, args.method)
    man = RunManifest("fit", {"alpha": args.alpha, "method": args.method,
                              "response_col": args.response_col}, inputs)
    emit(json_text({"manifest": man.to_dict(), **report}), args.out)
    return 0


# -- process ------------------------------------------------------------------

def _grid(points: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, points + 2)[1:-1]


def process_trajectory(data: Dataset, method: str, grid_points: int | None):
    if method == "rq":
        return rq_process(data, grid_points)
    if method == "rtwostep":
        return two_step_process(data)
    if method == "jaeckel":
        return r_estimator_process(data, _grid(grid_points or 99))
    raise ValueError(f"unknown method {method!r}")


def trajectory_rows(traj):
    edges = np.concatenate([[0.0], traj.breakpoints, [1.0]])
    for j in range(traj.n_segments):
        icpt = None if traj.intercepts is None else traj.intercepts[j]
        yield [edges[j], edges[j + 1], icpt, *traj.slopes[j]]


def cmd_process(args) -> int:
    data, names, inputs = _load(args.csv, args.response_col)
    traj = process_trajectory(data, args.method, args.grid_points)
    man = RunManifest("process", {"method": args.method, "grid_points": args.grid_points,
                                  "response_col": args.response_col}, inputs).to_dict()
    header = ["alpha_low", "alpha_high", "intercept", *names]
    emit(csv_text(man, header, trajectory_rows(traj)), args.out)
    if args.svg:
        cols, labels = traj.slopes, list(names)
        if traj.intercepts is not None:
            cols = np.column_stack([traj.intercepts, traj.slopes])
            labels = ["intercept", *labels]
        Path(args.svg).write_text(step_plot(traj.breakpoints, cols, labels,
                                            f"{args.method} process ({traj.n_segments} segments)",
                                            man))
    log.info("%d segments", traj.n_segments)
    return 0


# -- scores / restimate ---------------------------------------------------------

def score_rows(data: Dataset, alphas):
    for a in alphas:
        fit = fit_rq(data, a)
        rk = ranks(fit.residuals)
        for i in range(data.n):
            yield [a, i, int(rk[i]), fit.dual_scores[i]]


def cmd_scores(args) -> int:
    data, _, inputs = _load(args.csv, args.response_col)
    man = RunManifest("scores", {"alpha": list(args.alpha),
                                 "response_col": args.response_col}, inputs).to_dict()
    emit(csv_text(man, ["alpha", "index", "rank", "score"], score_rows(data, args.alpha)),
         args.out)
    return 0


def restimate_rows(data: Dataset, alphas, scores: str, method: str):
    for a in alphas:
        est = fit_r_estimator(data, a, scores, method)
        yield [a, *est.slopes, est.objective, est.degenerate]


def cmd_restimate(args) -> int:
    data, names, inputs = _load(args.csv, args.response_col)
    alphas = list(args.alpha) if args.alpha else list(_grid(args.grid_points))
    man = RunManifest("restimate", {"alpha": alphas, "scores": args.scores,
                                    "method": args.method,
                                    "response_col": args.response_col}, inputs).to_dict()
    header = ["alpha", *names, "objective", "degenerate"]
    emit(csv_text(man, header, restimate_rows(data, alphas, args.scores, args.method)), args.out)
    return 0


# -- simulate -----------------------------------------------------------------

def _resolve_config(spec: str) -> Path:
    p = Path(spec)
    if p.exists():
        return p
    packaged = resources.files("rqslopes") / "configs" / f"{spec}.json"
    if packaged.is_file():
        return Path(str(packaged))
    raise FileNotFoundError(f"no config file {spec!r} (and no packaged config of that name)")


def _matrix_rows(grid, M):
    for a, row in zip(grid, M):
        yield [a, *row]


def simulate_outputs(result, manifest: dict) -> dict[str, str]:
    """File name -> text for every artifact of one study run."""
    doc = {"manifest": manifest, **result.to_dict()} if hasattr(result, "to_dict") else {
        "manifest": manifest, **result}
    files = {"diagnostics.json": json_text(doc)}
    if isinstance(result, BridgeStudy):
        panels, labels = [], []
        for kind, diag in (("slope", result.slope), ("score", result.score)):
            g = diag.grid
            for j in range(diag.cov_empirical.shape[2]):
                files[f"{kind}_cov_{j + 1}.csv"] = csv_text(
                    manifest, ["alpha", *map(fmt, g)], _matrix_rows(g, diag.cov_empirical[:, :, j]))
                panels.append(diag.cov_empirical[:, :, j])
                labels.append(f"{kind} coordinate {j + 1}")
        panels.append(result.slope.reference_cov)
        labels.append("bridge min(s,t)-st")
        files["covariance_heatmap.svg"] = heatmap(panels, result.slope.grid, labels,
                                                  "empirical covariance vs Brownian bridge",
                                                  manifest)
    elif isinstance(result, DriftReport):
        p = result.empirical_mean.shape[1]
        header = ["alpha"] + [f"{k}_{j + 1}" for k in ("mean", "predicted", "se")
                              for j in range(p)]
        rows = ([a, *m, *q, *s] for a, m, q, s in zip(result.grid, result.empirical_mean,
                                                       result.predicted, result.standard_error))
        files["drift.csv"] = csv_text(manifest, header, rows)
    elif isinstance(result, RateReport):
        header = ["n", "median_sup_error", "median_bahadur", "median_linearity_standardized",
                  "median_linearity_density", "replicates_used"]
        files["rate.csv"] = csv_text(manifest, header,
                                     ([getattr(r, h) for h in header] for r in result.rows))
    else:
        rows = result["rows"]
        files["twostep.csv"] = csv_text(manifest, ["n", "median_scaled_gap", "replicates_used"],
                                        ([r["n"], r["median_scaled_gap"], r["replicates_used"]]
                                         for r in rows))
    return files


def cmd_simulate(args) -> int:
    path = _resolve_config(args.config)
    config = load_config(path)
    inputs = {path.name: file_digest(path)}
    if config.design_path:
        inputs[Path(config.design_path).name] = file_digest(config.design_path)
    # threads is deliberately left out of the manifest: it never changes results
    man = RunManifest("simulate", config.to_dict(), inputs)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = run_study(config, threads=args.threads)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    files = simulate_outputs(result, man.to_dict())
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out_dir / name).write_text(text)
    print(_simulate_summary(result))
    print(f"wrote {len(files)} files to {out_dir}")
    return 0


def _simulate_summary(result) -> str:
    if isinstance(result, BridgeStudy):
        d = result.slope
        lines = [f"bridge study: {d.replicates_used} replicates"]
        for kind, diag in (("slope", result.slope), ("score", result.score)):
            cov = diag.cov_at(0.25, 0.5) if np.any(np.isclose(diag.grid, 0.25)) else None
            var = diag.cov_at(0.5, 0.5)
            lines.append(f"  {kind}: var(0.5)={np.round(var, 4).tolist()}"
                         + (f" cov(0.25,0.5)={np.round(cov, 4).tolist()}" if cov is not None else "")
                         + f" cross_cov_max={diag.cross_cov_max:.4f}"
                         + f" ks={np.round(diag.ks_stats, 4).tolist()}")
        return "\n".join(lines)
    if isinstance(result, DriftReport):
        return (f"drift study: {result.replicates_used} replicates, max |z| = "
                f"{float(np.abs(result.z_scores).max()):.3f}")
    if isinstance(result, RateReport):
        return "rate study:\n" + "\n".join(
            f"  n={r.n}: sup_error={r.median_sup_error:.4f} bahadur={r.median_bahadur:.4f} "
            f"linearity standardized={r.median_linearity_standardized:.4f} "
            f"density={r.median_linearity_density:.4f}"
            for r in result.rows)
    return "two-step study:\n" + "\n".join(
        f"  n={r['n']}: median sqrt(n) gap={r['median_scaled_gap']:.4f}" for r in result["rows"])


# -- check --------------------------------------------------------------------

def check_report(model_name: str, alpha0: float, n: int, b: float,
                 data: Dataset | None = None, epsilon: float = DEFAULT_EPSILON) -> dict:
    """Condition report; ``hard_pass`` drives the exit status of ``check``."""
    model = error_model(model_name)
    a = model.tail_exponent_a
    astar = alpha_star(n, b)
    table = sorted({astar, *SIGMA_TABLE_ALPHAS, 1.0 - astar})
    f3 = check_f3(model, alpha0)
    hard = {
        "tail_bounds": f3.passed,
        "tail_exponent_a_below_quarter_minus_eps": bool(0 < a < 0.25 - epsilon),
    }
    advisory = {"b_minus_a_in_(0,eps/2)": bool(0 < b - a < epsilon / 2)}
    report = {
        "schema_version": SCHEMA_VERSION,
        "model": model.name,
        "alpha0": alpha0,
        "n": n,
        "b": b,
        "epsilon": epsilon,
        "alpha_star": astar,
        "sigma_alpha": [{"alpha": t, "sigma": sigma_alpha(model, t)} for t in table],
        "f3": f3.to_dict(),
    }
    if data is not None:
        try:
            s = design_summary(data)
        except RankDeficiencyError as exc:
            hard["design_full_rank"] = False
            report["design_error"] = str(exc)
        else:
            hard["design_full_rank"] = True
            report["design"] = {
                "n": data.n,
                "p": data.p,
                "q_eigenvalues": s.eigenvalues,
                "noether_max": s.noether_max,
                "leverage_sum": float(s.leverages.sum()),
                "leverages": s.leverages,
            }
    report["hard_conditions"] = hard
    report["advisory_conditions"] = advisory
    report["hard_pass"] = all(hard.values())
    return report


def format_check(report: dict) -> str:
    lines = [
        f"model: {report['model']}  (a={report['f3']['a']}, c={report['f3']['c']})",
        f"n={report['n']}  b={report['b']}",
        f"alpha_n* = {report['alpha_star']:.6g}",
        "",
        "sigma_alpha table:",
        "  alpha            sigma_alpha",
    ]
    for row in report["sigma_alpha"]:
        lines.append(f"  {row['alpha']:<16.8g} {row['sigma']:.6g}")
    f3 = report["f3"]
    lines += [
        "",
        f"tail bounds on (0, {f3['alpha0']}] and [1-{f3['alpha0']}, 1), grid down to {f3['grid_min']:g}: "
        f"{'PASS' if f3['passed'] else 'FAIL'}",
        f"  max quantile ratio {f3['max_quantile_ratio']:.4g}, "
        f"max density ratio {f3['max_density_ratio']:.4g} (worst alpha {f3['worst_alpha']:.3g})",
    ]
    if "design" in report:
        d = report["design"]
        lines += [
            "",
            f"design: n={d['n']} p={d['p']}",
            "  Q_n eigenvalues: " + " ".join(f"{v:.6g}" for v in d["q_eigenvalues"]),
            f"  Noether max leverage: {d['noether_max']:.6g}",
            f"  leverage sum: {d['leverage_sum']:.10g} (should equal p)",
        ]
    elif "design_error" in report:
        lines += ["", f"design: {report['design_error']}"]
    lines.append("")
    for k, v in report["hard_conditions"].items():
        lines.append(f"[hard]     {k}: {'pass' if v else 'FAIL'}")
    for k, v in report["advisory_conditions"].items():
        lines.append(f"[advisory] {k}: {'pass' if v else 'not met'}")
    return "\n".join(lines) + "\n"


def cmd_check(args) -> int:
    data, inputs = None, {}
    if args.csv:
        data, _, inputs = _load(args.csv, args.response_col)
    report = check_report(args.model, args.alpha0, args.n, args.b, data)
    sys.stdout.write(format_check(report))
    man = RunManifest("check", {"model": args.model, "alpha0": args.alpha0, "n": args.n,
                                "b": args.b}, inputs).to_dict()
    if args.leverage_csv and "design" in report:
        emit(csv_text(man, ["index", "leverage"], enumerate(report["design"]["leverages"])),
             args.leverage_csv)
    if args.json:
        emit(json_text({"manifest": man, **report}), args.json)
    return 0 if report["hard_pass"] else 1


# -- parser -------------------------------------------------------------------

def _alpha(text: str) -> float:
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1), got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rqslopes",
                                 description="Regression quantiles, rank scores and R-estimates.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def data_cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("csv", help="CSV with a header row and numeric columns")
        p.add_argument("--response-col", default="y")
        p.add_argument("-o", "--out", help="output file (default stdout)")
        return p

    p = data_cmd("fit", "fit one alpha and print a JSON coefficient report")
    p.add_argument("--alpha", type=_alpha, default=0.5)
    p.add_argument("--method", choices=FIT_METHODS, default="rq")
    p.set_defaults(func=cmd_fit)

    p = data_cmd("process", "trajectory over alpha as CSV (plus optional SVG)")
    p.add_argument("--method", choices=FIT_METHODS, default="rq")
    p.add_argument("--grid-points", type=int, default=None)
    p.add_argument("--svg", help="write a step plot to this file")
    p.set_defaults(func=cmd_process)

    p = data_cmd("scores", "regression rank scores as CSV (alpha, index, rank, score)")
    p.add_argument("--alpha", type=_alpha, action="append", required=True)
    p.set_defaults(func=cmd_scores)

    p = data_cmd("restimate", "R-estimates as CSV (alpha, slopes, objective, degenerate)")
    p.add_argument("--alpha", type=_alpha, action="append")
    p.add_argument("--grid-points", type=int, default=19)
    p.add_argument("--scores", choices=("hajek", "indicator"), default="hajek")
    p.add_argument("--method", choices=("lp", "descent"), default="lp")
    p.set_defaults(func=cmd_restimate)

    p = sub.add_parser("simulate", help="run a Monte Carlo study from a config file")
    p.add_argument("--config", required=True,
                   help="JSON/YAML config path, or a packaged name (bridge, drift, rate, twostep)")
    p.add_argument("--out-dir", default="simulation_output")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check", help="condition report for an error model (and optional design)")
    p.add_argument("--model", default="logistic")
    p.add_argument("--alpha0", type=float, default=0.1)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--b", type=float, default=DEFAULT_B_EXPONENT)
    p.add_argument("--csv", help="design CSV for Noether leverages and the Q_n spectrum")
    p.add_argument("--response-col", default="y")
    p.add_argument("--json", help="also write the report as JSON")
    p.add_argument("--leverage-csv", help="write per-observation leverages as CSV")
    p.set_defaults(func=cmd_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "command", None) == "check" and args.model not in BUILTIN_MODELS:
        print(f"error: unknown model {args.model!r}; choose from {sorted(BUILTIN_MODELS)}",
              file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (SchemaError, RankDeficiencyError, ConfigError, StudyAborted, LpError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
