"""Command-line interface: fit, select-knots, bootstrap, mttf, simulate.

Every command writes a single JSON document embedding the tool version and
the fully resolved configuration (defaults and seed included), so any run
can be reproduced from its output alone.  Validation problems exit 2 and
never leave partial output; numerical failures exit 3.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .bootstrap import bias_corrected_ci, quantile_ci, resample_and_refit
from .bspline import FixedKnots, QuantileKnots, SplineSpec
from .dataset import DEFAULT_KELVIN_OFFSET, load_addt_csv, stress_set
from .errors import (
    AddtError,
    CsvParseError,
    ExtrapolationError,
    ValidationError,
)
from .fit import FitControls, ModelFit, profile_fit
from .knotsel import select_spec
from .reliability import extrapolation_floor, mttf
from .simulation import load_scenario, run_misspec_study, run_recovery_study, write_study_csvs

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

_VALIDATION_ERRORS = (CsvParseError, ValidationError, ExtrapolationError)


def _default_threads() -> int:
    env = os.environ.get("ADDT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _write_document(path: str, doc: dict) -> None:
    """Atomic write: the file appears only once the document is complete."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _document(command: str, config: dict, result: dict) -> dict:
    return {
        "tool": "addtfit",
        "version": __version__,
        "command": command,
        "config": config,
        "result": result,
    }


def _controls_from_args(args) -> FitControls:
    return FitControls(
        beta_range=(args.beta_min, args.beta_max),
        grid_points=args.grid_points,
        beta_tol=args.beta_tol,
    )


def _add_fit_options(parser):
    parser.add_argument("--kelvin-offset", type=float, default=DEFAULT_KELVIN_OFFSET,
                        help="Celsius-to-Kelvin offset for the stress transform")
    parser.add_argument("--beta-min", type=float, default=0.0)
    parser.add_argument("--beta-max", type=float, default=5.0)
    parser.add_argument("--grid-points", type=int, default=21,
                        help="coarse profile grid size over the slope range")
    parser.add_argument("--beta-tol", type=float, default=1e-4,
                        help="golden-section refinement width for the slope")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="addtfit",
        description="Semi-parametric degradation modeling for ADDT data",
    )
    parser.add_argument("--version", action="version", version=f"addtfit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit the model to a CSV dataset")
    p_fit.add_argument("--input", required=True, help="CSV: temperature,time,response")
    p_fit.add_argument("--time-unit", default="hours")
    p_fit.add_argument("--degree", type=int, help="spline degree (with --knots)")
    p_fit.add_argument("--knots", type=int,
                       help="number of default quantile interior knots")
    p_fit.add_argument("--spec-json", help="fixed spline spec JSON file")
    _add_fit_options(p_fit)
    p_fit.add_argument("--output", required=True)

    p_sel = sub.add_parser("select-knots", help="AIC search over degree and knots")
    p_sel.add_argument("--input", required=True)
    p_sel.add_argument("--time-unit", default="hours")
    p_sel.add_argument("--degrees", default="1,2,3",
                       help="comma-separated spline degrees to search")
    p_sel.add_argument("--max-knots", type=int, default=5)
    _add_fit_options(p_sel)
    p_sel.add_argument("--output", required=True)

    p_boot = sub.add_parser("bootstrap", help="nonparametric bootstrap of a fit")
    p_boot.add_argument("--input", required=True, help="the CSV the fit was made from")
    p_boot.add_argument("--time-unit", default="hours")
    p_boot.add_argument("--fit", required=True, help="fit JSON from the fit command")
    p_boot.add_argument("-B", "--replicates", type=int, default=1000)
    p_boot.add_argument("--seed", type=int, default=0)
    p_boot.add_argument("--alpha", type=float, default=0.05)
    p_boot.add_argument("--threads", type=int, default=None)
    p_boot.add_argument("--mttf-temp", type=float,
                        help="also bootstrap the MTTF at this temperature (C)")
    p_boot.add_argument("--mttf-threshold", type=float)
    p_boot.add_argument("--relative", action="store_true",
                        help="threshold is a fraction of the initial level")
    p_boot.add_argument("--path-grid", type=int, default=0,
                        help="store baseline-path draws on a grid of this size")
    _add_fit_options(p_boot)
    p_boot.add_argument("--output", required=True)
    p_boot.add_argument("--samples-csv", help="optional CSV of raw replicate draws")

    p_mttf = sub.add_parser("mttf", help="mean time to failure at a use condition")
    p_mttf.add_argument("--fit", required=True)
    p_mttf.add_argument("--temp", type=float, required=True)
    p_mttf.add_argument("--threshold", type=float, required=True)
    p_mttf.add_argument("--relative", action="store_true")
    p_mttf.add_argument("--bootstrap", help="bootstrap JSON with mttf samples for a CI")
    p_mttf.add_argument("--alpha", type=float, default=0.05)
    p_mttf.add_argument("--output", required=True)

    p_sim = sub.add_parser("simulate", help="run a Monte Carlo study scenario")
    p_sim.add_argument("--scenario", required=True, help="scenario JSON file")
    p_sim.add_argument("--full", action="store_true",
                       help="paper-scale replicate counts instead of desk scale")
    p_sim.add_argument("--seed", type=int, help="override the scenario seed")
    p_sim.add_argument("--threads", type=int, default=None)
    p_sim.add_argument("--output", required=True)
    p_sim.add_argument("--csv-dir", help="also write plotting CSVs here")
    return parser


def _knot_strategy(args):
    if args.spec_json:
        if args.degree is not None or args.knots is not None:
            raise ValidationError("--spec-json conflicts with --degree/--knots")
        with open(args.spec_json, "r", encoding="utf-8") as fh:
            return FixedKnots(SplineSpec.from_json(json.load(fh)))
    if args.degree is None or args.knots is None:
        raise ValidationError("need either --spec-json or both --degree and --knots")
    if args.degree < 0 or args.knots < 0:
        raise ValidationError("--degree and --knots must be nonnegative")
    if args.knots == 0:
        return QuantileKnots(degree=args.degree, levels=())
    return QuantileKnots.default(args.degree, args.knots)


def _cmd_fit(args) -> int:
    strategy = _knot_strategy(args)
    data = load_addt_csv(args.input, time_unit=args.time_unit)
    stresses = stress_set(data, args.kelvin_offset)
    controls = _controls_from_args(args)
    fit = profile_fit(data, stresses, strategy, controls)
    config = {
        "input": args.input,
        "time_unit": args.time_unit,
        "knots": strategy.to_json(),
        "kelvin_offset": args.kelvin_offset,
        "beta_range": [args.beta_min, args.beta_max],
        "grid_points": args.grid_points,
        "beta_tol": args.beta_tol,
    }
    _write_document(args.output, _document("fit", config, fit.to_json()))
    print(f"beta={fit.beta:.6g} sigma={fit.sigma:.6g} rho={fit.rho:.6g} "
          f"edf={fit.edf} AIC={fit.aic:.4f}")
    if fit.beta_at_boundary:
        print("warning: slope maximum at the search boundary; widen --beta-min/max",
              file=sys.stderr)
    return EXIT_OK


def _cmd_select_knots(args) -> int:
    data = load_addt_csv(args.input, time_unit=args.time_unit)
    stresses = stress_set(data, args.kelvin_offset)
    degrees = tuple(int(d) for d in args.degrees.split(","))
    controls = _controls_from_args(args)
    report = select_spec(data, stresses, degrees=degrees, n_max=args.max_knots,
                         controls=controls)
    config = {
        "input": args.input,
        "time_unit": args.time_unit,
        "degrees": list(degrees),
        "max_knots": args.max_knots,
        "kelvin_offset": args.kelvin_offset,
        "beta_range": [args.beta_min, args.beta_max],
        "grid_points": args.grid_points,
        "beta_tol": args.beta_tol,
    }
    _write_document(args.output, _document("select-knots", config, report.to_json()))
    print(report.aic_table())
    w = report.winner_fit
    print(f"winner: degree={w.spec.degree} interior={list(w.spec.interior)} "
          f"AIC={w.aic:.4f}")
    return EXIT_OK


def _cmd_bootstrap(args) -> int:
    if args.replicates < 1:
        raise ValidationError("-B must be >= 1")
    if (args.mttf_temp is None) != (args.mttf_threshold is None):
        raise ValidationError("--mttf-temp and --mttf-threshold go together")
    data = load_addt_csv(args.input, time_unit=args.time_unit)
    with open(args.fit, "r", encoding="utf-8") as fh:
        fit_doc = json.load(fh)
    fit = ModelFit.from_json(fit_doc.get("result", fit_doc))
    controls = _controls_from_args(args)
    mttf_query = None
    if args.mttf_temp is not None:
        mttf_query = (args.mttf_temp, args.mttf_threshold, args.relative)
    path_grid = None
    if args.path_grid > 0:
        lo, hi = fit.spec.boundary
        path_grid = np.linspace(lo, hi, args.path_grid)
    workers = args.threads if args.threads else _default_threads()
    result = resample_and_refit(
        fit, data, args.replicates, seed=args.seed, controls=controls,
        mttf_query=mttf_query, path_grid=path_grid, workers=workers,
    )
    cis = {}
    for name, samples, est in (
        ("beta", result.beta, fit.beta),
        ("sigma", result.sigma, fit.sigma),
        ("rho", result.rho, fit.rho),
    ):
        if samples.size >= 2:
            cis[name] = {
                "estimate": est,
                "quantile": list(quantile_ci(samples, args.alpha)),
                "bias_corrected": list(bias_corrected_ci(samples, est, args.alpha)),
            }
    config = {
        "input": args.input,
        "fit": args.fit,
        "replicates": args.replicates,
        "seed": args.seed,
        "alpha": args.alpha,
        "threads": workers,
        "mttf_query": list(mttf_query) if mttf_query else None,
        "path_grid": args.path_grid,
        "beta_range": [args.beta_min, args.beta_max],
        "grid_points": args.grid_points,
        "beta_tol": args.beta_tol,
    }
    doc = _document("bootstrap", config, {"samples": result.to_json(), "ci": cis})
    _write_document(args.output, doc)
    if args.samples_csv:
        with open(args.samples_csv, "w", encoding="utf-8") as fh:
            cols = ["replicate", "beta", "sigma", "rho"]
            has_mttf = result.mttf is not None
            if has_mttf:
                cols.append("mttf")
            fh.write(",".join(cols) + "\n")
            for i in range(result.b_usable):
                row = [str(result.replicate_index[i]), repr(result.beta[i]),
                       repr(result.sigma[i]), repr(result.rho[i])]
                if has_mttf:
                    row.append(repr(result.mttf[i]))
                fh.write(",".join(row) + "\n")
    print(f"bootstrap: {result.b_usable}/{args.replicates} usable replicates "
          f"({result.failures} failures)")
    for name, ci in cis.items():
        q = ci["quantile"]
        print(f"  {name}: estimate={ci['estimate']:.6g} "
              f"95q=[{q[0]:.6g}, {q[1]:.6g}]")
    return EXIT_OK


def _cmd_mttf(args) -> int:
    with open(args.fit, "r", encoding="utf-8") as fh:
        fit_doc = json.load(fh)
    fit = ModelFit.from_json(fit_doc.get("result", fit_doc))
    value = mttf(fit, args.temp, args.threshold, relative=args.relative)
    d_f = args.threshold * _initial_level(fit) if args.relative else args.threshold
    result = {
        "temp_use": args.temp,
        "threshold": args.threshold,
        "relative": args.relative,
        "D_f": d_f,
        "y_M": fit.y_floor,
        "m_f": value,
        "time_unit": fit.time_unit,
        "ci_lower": None,
        "ci_upper": None,
    }
    if args.bootstrap:
        with open(args.bootstrap, "r", encoding="utf-8") as fh:
            boot_doc = json.load(fh)
        samples = boot_doc.get("result", boot_doc).get("samples", {}).get("mttf")
        if samples is None:
            raise ValidationError(
                "bootstrap document has no mttf samples; rerun bootstrap "
                "with --mttf-temp/--mttf-threshold"
            )
        arr = np.asarray([s for s in samples if s is not None and np.isfinite(s)])
        if arr.size >= 2:
            lo, hi = bias_corrected_ci(arr, value, args.alpha)
            result["ci_lower"], result["ci_upper"] = lo, hi
            result["ci_method"] = "bias_corrected"
            result["ci_alpha"] = args.alpha
    config = {
        "fit": args.fit,
        "temp": args.temp,
        "threshold": args.threshold,
        "relative": args.relative,
        "bootstrap": args.bootstrap,
        "alpha": args.alpha,
    }
    _write_document(args.output, _document("mttf", config, result))
    print(f"MTTF at {args.temp} C: {value:.6g} {fit.time_unit} "
          f"(threshold {result['D_f']:.6g}, floor {fit.y_floor:.6g})")
    return EXIT_OK


def _initial_level(fit: ModelFit) -> float:
    from .reliability import baseline_initial_level

    return baseline_initial_level(fit)


def _cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = scenario.from_json({**scenario.to_json(), "seed": args.seed})
    workers = args.threads if args.threads else _default_threads()
    if scenario.study == "recovery":
        metrics = run_recovery_study(scenario, workers=workers, full=args.full)
    else:
        metrics = run_misspec_study(scenario, workers=workers, full=args.full)
    config = {
        "scenario": args.scenario,
        "full": args.full,
        "seed": scenario.seed,
        "threads": workers,
        "resolved_scenario": scenario.to_json(),
    }
    _write_document(args.output, _document("simulate", config, metrics.to_json()))
    if args.csv_dir:
        for path in write_study_csvs(metrics, args.csv_dir):
            print(f"wrote {path}")
    print(f"{scenario.study}: {metrics.n_replicates} replicates, "
          f"{metrics.failures} failures")
    if metrics.parameters:
        for name, st in metrics.parameters.items():
            print(f"  {name}: bias={st['bias']:+.5f} sd={st['sd']:.5f} "
                  f"mse={st['mse']:.3e}")
    if metrics.path_metrics:
        for model, st in metrics.path_metrics.items():
            print(f"  {model}: IBias={st['ibias']:.4f} RIVar={st['rivar']:.4f} "
                  f"RIMSE={st['rimse']:.4f}")
    if metrics.mttf_metrics:
        for model in ("true_model", "wrong_model", "semiparametric"):
            st = metrics.mttf_metrics.get(model)
            if st and "mean" in st:
                print(f"  MTTF {model}: mean={st['mean']:.2f} bias={st['bias']:+.2f} "
                      f"sd={st['sd']:.2f} rmse={st['rmse']:.2f}")
    return EXIT_OK


_HANDLERS = {
    "fit": _cmd_fit,
    "select-knots": _cmd_select_knots,
    "bootstrap": _cmd_bootstrap,
    "mttf": _cmd_mttf,
    "simulate": _cmd_simulate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except AddtError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
