"""Command-line entry point.

Runs are driven by a single JSON config (plus --output and --seed-override
flags) so that campaigns are reproducible artifacts: every emitted file
embeds the hash of the effective config and the seed, and repeated runs of
the same config are byte-identical regardless of worker-pool size.

Commands:
  cefr estimate --config cfg.json   fit + bands on a CSV dataset
  cefr select   --config cfg.json   CV scores and the chosen (k, lambda)
  cefr simulate --config cfg.json   Monte Carlo campaign -> campaign.csv
  cefr band     --config cfg.json   re-band a stored fit (new grid/delta)

Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from ._parallel import resolve_jobs
from .basis import BasisMatrix, BasisSpec, basis_dim
from .crossfit import crossfit_signals, make_folds
from .dataset import ColumnMapping, load_csv
from .errors import CefrError, ConfigError, DataError, SchemaError
from .estimator import SeriesRatioFit, fit_series_ratio, predict_theta
from .inference import (InferenceReport, band_table, confidence_band,
                        default_grid, estimate_covariance)
from .modelselect import Candidate, select_model
from .nuisance import LearnerSpec
from .numerics import SeededRng, SymMatrix
from .signals import ESTIMANDS, SignalSpec, estimand_plan, required_columns
from .simharness import DGP_KINDS, McConfig, run_monte_carlo, sensitivity_sweep

COMMANDS = ("estimate", "select", "simulate", "band")


# ---------------------------------------------------------------------------
# config plumbing


def config_hash(config: dict) -> str:
    payload = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _fail(path: str, message: str) -> ConfigError:
    return ConfigError(f"config field {path}: {message}")


def _section(config: dict, name: str, required: bool = True) -> dict:
    value = config.get(name)
    if value is None:
        if required:
            raise _fail(name, "missing required section")
        return {}
    if not isinstance(value, dict):
        raise _fail(name, "must be an object")
    return value


def _field(section: dict, path: str, name: str, types, required=False,
           default=None):
    if name not in section:
        if required:
            raise _fail(f"{path}.{name}", "missing required field")
        return default
    value = section[name]
    if types is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, types):
        raise _fail(f"{path}.{name}",
                    f"expected {getattr(types, '__name__', types)}, "
                    f"got {type(value).__name__}")
    return value


def _seed(config: dict) -> int:
    seed = config.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise _fail("seed", "a mandatory integer (no wall-clock default)")
    return seed


def _learners(config: dict) -> dict:
    section = _section(config, "learners", required=False)
    out = {}
    for role, spec in section.items():
        if role not in ("outcome", "treatment", "propensity"):
            raise _fail(f"learners.{role}", "unknown role")
        if not isinstance(spec, dict) or "kind" not in spec:
            raise _fail(f"learners.{role}", "must be an object with 'kind'")
        params = {k: v for k, v in spec.items() if k != "kind"}
        out[role] = LearnerSpec(spec["kind"], params)
    return out


def _signal_spec(config: dict) -> tuple:
    section = _section(config, "estimand")
    name = _field(section, "estimand", "name", str, required=True)
    if name not in ESTIMANDS:
        raise _fail("estimand.name", f"must be one of {ESTIMANDS}")
    eps = _field(section, "estimand", "trim_eps", float, default=0.01)
    positive = _field(section, "estimand", "denominator_positive", bool,
                      default=False)
    return SignalSpec(name, trim_eps=eps), positive


def _basis_candidates(config: dict, n_vars: int) -> tuple:
    """Returns (candidates, is_fixed)."""
    section = _section(config, "basis")
    interactions = _field(section, "basis", "include_interactions", bool,
                          default=True)
    if "degree" in section:
        degree = _field(section, "basis", "degree", int, required=True)
        lam = _field(section, "basis", "lambda", float, default=0.0)
        return [Candidate(BasisSpec(n_vars, degree, interactions), lam)], True
    degrees = _field(section, "basis", "degrees", list, required=True)
    lambdas = _field(section, "basis", "lambdas", list, default=[0.0])
    cands = [Candidate(BasisSpec(n_vars, int(d), interactions), float(l))
             for d in degrees for l in lambdas]
    if not cands:
        raise _fail("basis.degrees", "must be non-empty")
    return cands, False


def _grid_from_config(section: dict, path: str, v_obs) -> np.ndarray:
    grid_cfg = section.get("grid")
    if grid_cfg is None:
        size = _field(section, path, "grid_size", int, default=100)
        return default_grid(v_obs, size)
    if isinstance(grid_cfg, dict):
        lo = _field(grid_cfg, f"{path}.grid", "lo", float, required=True)
        hi = _field(grid_cfg, f"{path}.grid", "hi", float, required=True)
        size = _field(grid_cfg, f"{path}.grid", "size", int, default=100)
        return np.linspace(lo, hi, size)[:, None]
    if isinstance(grid_cfg, list):
        grid = np.asarray(grid_cfg, dtype=float)
        if grid.ndim == 1:
            grid = grid[:, None]
        return grid
    raise _fail(f"{path}.grid", "must be a list of points or {lo, hi, size}")


# ---------------------------------------------------------------------------
# artifact writers


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def _format_cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


def _write_csv(path: Path, header, rows, meta: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key, value in sorted(meta.items()):
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])


# ---------------------------------------------------------------------------
# command implementations


def _check_role_columns(path, mapping: ColumnMapping, spec: SignalSpec) -> None:
    """Role-aware schema check so errors name the role, not just the column."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = [h.strip() for h in next(csv.reader(fh), [])]
    names = required_columns(spec, mapping)
    for role, column in names.items():
        if column not in header:
            raise SchemaError(
                f"{path}: column {column!r} for role {role!r} is missing")
    missing = [c for c in mapping.covariates if c not in header]
    if missing:
        raise SchemaError(f"{path}: covariate columns missing: {missing}")


def _load_frame(config: dict, spec: SignalSpec):
    data = _section(config, "data")
    path = _field(data, "data", "path", str, required=True)
    mapping_cfg = _field(data, "data", "mapping", dict, required=True)
    mapping = ColumnMapping.from_dict(mapping_cfg)
    if not mapping.target_covariates:
        raise _fail("data.mapping.target_covariates", "must be non-empty")
    required_columns(spec, mapping)  # role presence in the mapping
    if not Path(path).exists():
        raise DataError(f"data file not found: {path}")
    _check_role_columns(path, mapping, spec)
    return load_csv(path, mapping), mapping


def _build_signals_for_data(config: dict, frame, mapping, spec: SignalSpec,
                            rng: SeededRng, n_jobs: int):
    g = _field(config, "", "crossfit_g", int, default=5)
    plan = make_folds(frame.n_rows, g, rng.child(1))
    learners = _learners(config)
    pair = crossfit_signals(spec, frame, mapping, learners, plan,
                            rng.child(2), n_jobs=n_jobs)
    return pair, g


def _select_candidate(config, candidates, fixed, pair, v, positive, rng):
    if fixed or len(candidates) == 1:
        return candidates[0], None
    sel = select_model(candidates, pair.u, pair.t, v, folds=_field(
        config, "", "cv_folds", int, default=5), rng=rng,
        denominator_positive=positive)
    return sel.chosen, sel


def _cmd_estimate(config: dict, out_dir: Path) -> dict:
    seed = _seed(config)
    rng = SeededRng(seed)
    n_jobs = resolve_jobs(config.get("threads"))
    spec, positive = _signal_spec(config)
    frame, mapping = _load_frame(config, spec)
    pair, g = _build_signals_for_data(config, frame, mapping, spec,
                                      rng.child(10), n_jobs)
    v = frame.subvector(mapping.target_covariates)
    candidates, fixed = _basis_candidates(config, v.shape[1])
    chosen, sel = _select_candidate(config, candidates, fixed, pair, v,
                                    positive, rng.child(11))
    basis_matrix = BasisMatrix.build(chosen.basis, v)
    fit = fit_series_ratio(basis_matrix, pair.u, pair.t, chosen.lam)

    inf_cfg = _section(config, "inference", required=False)
    delta = _field(inf_cfg, "inference", "delta", float, default=0.05)
    b_draws = _field(inf_cfg, "inference", "bootstrap_draws", int, default=1000)
    grid = _grid_from_config(inf_cfg, "inference", v)
    omega = estimate_covariance(fit, basis_matrix, pair.u, pair.t)
    report = confidence_band(fit, omega, grid, delta, b_draws, rng.child(12))

    payload = _fit_payload(config, seed, spec, chosen, fit, omega, report,
                           g, sel)
    _write_json(out_dir / "fit_report.json", payload)
    header, rows = band_table(report)
    _write_csv(out_dir / "bands.csv", header, rows,
               {"config_hash": payload["config_hash"], "seed": seed})
    return payload


def _fit_payload(config, seed, spec, chosen, fit: SeriesRatioFit,
                 omega: SymMatrix, report: InferenceReport | None,
                 crossfit_g, sel) -> dict:
    payload = {
        "config_hash": config_hash(config),
        "config": config,
        "seed": seed,
        "estimand": spec.estimand,
        "trim_eps": spec.trim_eps,
        "crossfit_g": crossfit_g,
        "n": fit.n,
        "basis": {"n_vars": fit.basis.n_vars,
                  "max_degree": fit.basis.max_degree,
                  "include_interactions": fit.basis.include_interactions},
        "selected": {"k": basis_dim(chosen.basis),
                     "degree": chosen.basis.max_degree,
                     "lambda": chosen.lam},
        "beta": fit.beta,
        "q_hat": fit.q_hat.values,
        "omega": omega.values,
    }
    if sel is not None:
        payload["selection_scores"] = sel.scores
        payload["cv_folds"] = sel.folds
    if report is not None:
        payload.update({
            "grid": report.grid,
            "theta": report.theta_grid,
            "sigma": report.sigma_grid,
            "pointwise_lo": report.pointwise_lo,
            "pointwise_hi": report.pointwise_hi,
            "uniform_lo": report.uniform_lo,
            "uniform_hi": report.uniform_hi,
            "critical_pointwise": report.critical_pointwise,
            "critical_uniform": report.critical_uniform,
            "delta": report.delta,
            "bootstrap_draws": report.b_draws,
        })
    return payload


def _cmd_select(config: dict, out_dir: Path) -> dict:
    seed = _seed(config)
    rng = SeededRng(seed)
    n_jobs = resolve_jobs(config.get("threads"))
    spec, positive = _signal_spec(config)
    frame, mapping = _load_frame(config, spec)
    pair, g = _build_signals_for_data(config, frame, mapping, spec,
                                      rng.child(10), n_jobs)
    v = frame.subvector(mapping.target_covariates)
    candidates, fixed = _basis_candidates(config, v.shape[1])
    if fixed:
        raise _fail("basis", "select needs candidate lists, not a fixed model")
    folds = _field(config, "", "cv_folds", int, default=5)
    sel = select_model(candidates, pair.u, pair.t, v, folds=folds,
                       rng=rng.child(11), denominator_positive=positive)
    payload = {
        "config_hash": config_hash(config),
        "config": config,
        "seed": seed,
        "estimand": spec.estimand,
        "crossfit_g": g,
        "cv_folds": sel.folds,
        "chosen": {"k": sel.chosen.k, "degree": sel.chosen.basis.max_degree,
                   "lambda": sel.chosen.lam},
        "scores": sel.scores,
    }
    _write_json(out_dir / "selection.json", payload)
    _write_csv(out_dir / "scores.csv",
               ["k", "degree", "lambda", "score", "excluded"],
               [[s["k"], s["degree"], s["lam"], s["score"], s["excluded"]]
                for s in sel.scores],
               {"config_hash": payload["config_hash"], "seed": seed})
    return payload


_CAMPAIGN_COLUMNS = ("estimator", "dgp", "n", "k", "lambda", "bias", "sd",
                     "mse", "width_mean", "width_std", "width_q20",
                     "width_q40", "width_q60", "width_q80", "cvr",
                     "failures", "replications", "base_seed")


def _cmd_simulate(config: dict, out_dir: Path) -> dict:
    seed = _seed(config)
    n_jobs = resolve_jobs(config.get("threads"))
    section = _section(config, "simulate")
    dgp = _field(section, "simulate", "dgp", str, required=True)
    if dgp not in DGP_KINDS:
        raise _fail("simulate.dgp", f"must be one of {DGP_KINDS}")
    n = _field(section, "simulate", "n", int, required=True)
    reps = _field(section, "simulate", "replications", int, required=True)
    sweep = _field(section, "simulate", "sweep", bool, default=False)
    base = dict(
        dgp=dgp, n=n, replications=reps,
        estimator=_field(section, "simulate", "estimator", str, default="direct"),
        degrees=tuple(_field(section, "simulate", "degrees", list,
                             default=[1, 2, 3])),
        lambdas=tuple(_field(section, "simulate", "lambdas", list,
                             default=[0.001, 0.01, 0.1, 1.0])),
        cv_folds=_field(section, "simulate", "cv_folds", int, default=5),
        crossfit_g=_field(section, "simulate", "crossfit_g", int, default=5),
        trim_eps=_field(section, "simulate", "trim_eps", float, default=0.01),
        with_bands=_field(section, "simulate", "with_bands", bool,
                          default=False),
        delta=_field(section, "simulate", "delta", float, default=0.05),
        bootstrap_draws=_field(section, "simulate", "bootstrap_draws", int,
                               default=1000),
        grid_size=_field(section, "simulate", "grid_size", int, default=100),
        learners=_learners(config) or None,
    )
    if sweep:
        summaries = sensitivity_sweep(
            dgp, n, base["degrees"], base["lambdas"], reps, seed,
            n_jobs=n_jobs)
    else:
        fixed_degree = _field(section, "simulate", "fixed_degree", int)
        fixed_lambda = _field(section, "simulate", "fixed_lambda", float)
        mc = McConfig(fixed_degree=fixed_degree, fixed_lambda=fixed_lambda,
                      **base)
        summaries = [run_monte_carlo(mc, seed, n_jobs=n_jobs)]
    rows = []
    for summary in summaries:
        row = summary.to_row()
        rows.append([row[c] for c in _CAMPAIGN_COLUMNS])
    meta = {"config_hash": config_hash(config), "seed": seed}
    _write_csv(out_dir / "campaign.csv", list(_CAMPAIGN_COLUMNS), rows, meta)
    return {"rows": len(rows), **meta}


def _cmd_band(config: dict, out_dir: Path) -> dict:
    seed = _seed(config)
    section = _section(config, "band")
    report_path = _field(section, "band", "fit_report", str, required=True)
    if not Path(report_path).exists():
        raise DataError(f"stored fit not found: {report_path}")
    stored = json.loads(Path(report_path).read_text(encoding="utf-8"))
    for key in ("beta", "q_hat", "omega", "basis", "n", "selected"):
        if key not in stored:
            raise DataError(f"{report_path}: stored fit lacks field {key!r}")
    basis = BasisSpec(stored["basis"]["n_vars"], stored["basis"]["max_degree"],
                      stored["basis"]["include_interactions"])
    fit = SeriesRatioFit(beta=np.asarray(stored["beta"], dtype=float),
                         q_hat=SymMatrix(np.asarray(stored["q_hat"])),
                         lam=float(stored["selected"]["lambda"]),
                         basis=basis, n=int(stored["n"]))
    omega = SymMatrix(np.asarray(stored["omega"]))
    delta = _field(section, "band", "delta", float, default=0.05)
    b_draws = _field(section, "band", "bootstrap_draws", int, default=1000)
    if "grid" in section:
        grid = _grid_from_config(section, "band", None)
    elif "grid" in stored:
        grid = np.asarray(stored["grid"], dtype=float)
    else:
        raise _fail("band.grid", "no grid in config and none stored with fit")
    rng = SeededRng(seed)
    report = confidence_band(fit, omega, grid, delta, b_draws, rng.child(12))
    payload = {
        "config_hash": config_hash(config),
        "config": config,
        "seed": seed,
        "source_fit": report_path,
        "n": fit.n,
        "basis": stored["basis"],
        "selected": stored["selected"],
        "beta": fit.beta,
        "q_hat": fit.q_hat.values,
        "omega": omega.values,
        "grid": report.grid,
        "theta": report.theta_grid,
        "sigma": report.sigma_grid,
        "pointwise_lo": report.pointwise_lo,
        "pointwise_hi": report.pointwise_hi,
        "uniform_lo": report.uniform_lo,
        "uniform_hi": report.uniform_hi,
        "critical_pointwise": report.critical_pointwise,
        "critical_uniform": report.critical_uniform,
        "delta": delta,
        "bootstrap_draws": b_draws,
    }
    _write_json(out_dir / "band_report.json", payload)
    header, rows = band_table(report)
    _write_csv(out_dir / "bands.csv", header, rows,
               {"config_hash": payload["config_hash"], "seed": seed})
    return payload


def run(command: str, config: dict, out_dir) -> dict:
    """Execute one CLI command against a parsed config."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if command == "estimate":
        return _cmd_estimate(config, out_dir)
    if command == "select":
        return _cmd_select(config, out_dir)
    if command == "simulate":
        return _cmd_simulate(config, out_dir)
    if command == "band":
        return _cmd_band(config, out_dir)
    raise ConfigError(f"unknown command {command!r}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cefr",
        description="Series estimation and uniform inference for ratios of "
                    "conditional expectation functions")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON config path")
    parser.add_argument("--output", default="cefr_out",
                        help="output directory (default: cefr_out)")
    parser.add_argument("--seed-override", type=int, default=None,
                        help="replace the config seed")
    args = parser.parse_args(argv)
    try:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as err:
            raise ConfigError(f"cannot read config: {err}") from err
        try:
            config = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError(f"config is not valid JSON: {err}") from err
        if not isinstance(config, dict):
            raise ConfigError("config must be a JSON object")
        if args.seed_override is not None:
            config["seed"] = args.seed_override
        run(args.command, config, args.output)
    except CefrError as err:
        print(f"cefr: error: {err}", file=sys.stderr)
        return err.exit_code
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
