"""Monte Carlo engines: estimator-recovery and model-misspecification studies.

The recovery study draws data from a monotone-spline truth with
compound-symmetric errors and measures bias/SD/MSE of the estimators plus
bootstrap CI coverage.  The misspecification study draws data from a
linear Arrhenius truth and compares the true parametric model, a wrong
sigmoidal parametric model, and the semi-parametric fit (with knot
selection) on baseline-path accuracy and MTTF at a use condition.

Replicates run on per-replicate RNG streams keyed by (seed, index), so
results are bit-identical regardless of worker count.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .bootstrap import bias_corrected_ci, quantile_ci, resample_and_refit
from .bspline import QuantileKnots, path_value
from .dataset import AddtDataset, StressSet, arrhenius_x, stress_set
from .errors import AddtError, NumericalError, ValidationError
from .fit import FitControls, profile_fit
from .knotsel import select_spec
from .reliability import mttf as semiparametric_mttf

__all__ = [
    "SplineTruth",
    "ParametricTruth",
    "MttfSpec",
    "SimulationScenario",
    "StudyMetrics",
    "load_scenario",
    "generate_spline_data",
    "generate_parametric_data",
    "ParametricFit",
    "fit_parametric",
    "run_recovery_study",
    "run_misspec_study",
    "write_study_csvs",
]

_CONVENTIONS = (
    "bias = mean(est) - truth; sd uses ddof=1; mse = mean((est - truth)^2); "
    "integrated path metrics use trapezoidal quadrature normalized by the "
    "interval length, with population (ddof=0) variances so that "
    "rimse^2 = ibias^2 + rivar^2 exactly"
)


@dataclass(frozen=True)
class SplineTruth:
    """Spline-baseline truth; knot locations are regenerated from the design
    as the default quantile knots at the true slope."""

    degree: int
    n_interior: int
    gamma: tuple[float, ...]
    beta: float
    sigma: float
    rho: float

    kind = "spline"

    def to_json(self) -> dict:
        return {
            "kind": "spline",
            "degree": self.degree,
            "n_interior": self.n_interior,
            "gamma": list(self.gamma),
            "beta": self.beta,
            "sigma": self.sigma,
            "rho": self.rho,
        }


@dataclass(frozen=True)
class ParametricTruth:
    """Linear Arrhenius truth: mean = beta0 + beta1 exp(beta2 x) t."""

    beta0: float
    beta1: float
    beta2: float
    sigma: float
    rho: float

    kind = "parametric"

    def to_json(self) -> dict:
        return {
            "kind": "parametric",
            "beta0": self.beta0,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "sigma": self.sigma,
            "rho": self.rho,
        }


@dataclass(frozen=True)
class MttfSpec:
    temp_c: float
    threshold: float
    report_divisor: float = 1.0  # e.g. 168 to report weeks from hour-scale data

    def to_json(self) -> dict:
        return {
            "temp_c": self.temp_c,
            "threshold": self.threshold,
            "report_divisor": self.report_divisor,
        }


@dataclass(frozen=True)
class SimulationScenario:
    study: str  # "recovery" or "misspec"
    temps_c: tuple[float, ...]
    times: tuple[float, ...]
    reps_per_cell: int
    truth: SplineTruth | ParametricTruth
    n_datasets: int
    seed: int
    n_datasets_full: int | None = None
    time_zero_count: int = 0  # extra shared batch at t=0, attached to the first level
    kelvin_offset: float = 273.15
    time_unit: str = "hours"
    bootstrap_b: int = 0
    bootstrap_b_full: int = 0
    alpha: float = 0.05
    beta_range: tuple[float, float] = (0.0, 2.0)
    path_grid_points: int = 101
    grid_points: int = 200
    mttf: MttfSpec | None = None

    def __post_init__(self):
        if self.study not in ("recovery", "misspec"):
            raise ValidationError(f"unknown study {self.study!r}")
        if self.study == "recovery" and not isinstance(self.truth, SplineTruth):
            raise ValidationError("recovery study needs a spline truth")
        if self.study == "misspec" and not isinstance(self.truth, ParametricTruth):
            raise ValidationError("misspec study needs a parametric truth")

    def n_reps(self, full: bool) -> int:
        if full and self.n_datasets_full:
            return self.n_datasets_full
        return self.n_datasets

    def n_boot(self, full: bool) -> int:
        if full and self.bootstrap_b_full:
            return self.bootstrap_b_full
        return self.bootstrap_b

    def to_json(self) -> dict:
        return {
            "study": self.study,
            "temps_c": list(self.temps_c),
            "times": list(self.times),
            "reps_per_cell": self.reps_per_cell,
            "time_zero_count": self.time_zero_count,
            "kelvin_offset": self.kelvin_offset,
            "time_unit": self.time_unit,
            "truth": self.truth.to_json(),
            "n_datasets": self.n_datasets,
            "n_datasets_full": self.n_datasets_full,
            "bootstrap_b": self.bootstrap_b,
            "bootstrap_b_full": self.bootstrap_b_full,
            "alpha": self.alpha,
            "seed": self.seed,
            "beta_range": list(self.beta_range),
            "path_grid_points": self.path_grid_points,
            "grid_points": self.grid_points,
            "mttf": self.mttf.to_json() if self.mttf else None,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SimulationScenario":
        truth_obj = obj["truth"]
        if truth_obj["kind"] == "spline":
            truth = SplineTruth(
                degree=int(truth_obj["degree"]),
                n_interior=int(truth_obj["n_interior"]),
                gamma=tuple(float(v) for v in truth_obj["gamma"]),
                beta=float(truth_obj["beta"]),
                sigma=float(truth_obj["sigma"]),
                rho=float(truth_obj["rho"]),
            )
        elif truth_obj["kind"] == "parametric":
            truth = ParametricTruth(
                beta0=float(truth_obj["beta0"]),
                beta1=float(truth_obj["beta1"]),
                beta2=float(truth_obj["beta2"]),
                sigma=float(truth_obj["sigma"]),
                rho=float(truth_obj["rho"]),
            )
        else:
            raise ValidationError(f"unknown truth kind {truth_obj.get('kind')!r}")
        mttf_obj = obj.get("mttf")
        mttf = (
            MttfSpec(
                temp_c=float(mttf_obj["temp_c"]),
                threshold=float(mttf_obj["threshold"]),
                report_divisor=float(mttf_obj.get("report_divisor", 1.0)),
            )
            if mttf_obj
            else None
        )
        return cls(
            study=obj["study"],
            temps_c=tuple(float(v) for v in obj["temps_c"]),
            times=tuple(float(v) for v in obj["times"]),
            reps_per_cell=int(obj["reps_per_cell"]),
            time_zero_count=int(obj.get("time_zero_count", 0)),
            kelvin_offset=float(obj.get("kelvin_offset", 273.15)),
            time_unit=str(obj.get("time_unit", "hours")),
            truth=truth,
            n_datasets=int(obj["n_datasets"]),
            n_datasets_full=(
                int(obj["n_datasets_full"]) if obj.get("n_datasets_full") else None
            ),
            bootstrap_b=int(obj.get("bootstrap_b", 0)),
            bootstrap_b_full=int(obj.get("bootstrap_b_full", 0)),
            alpha=float(obj.get("alpha", 0.05)),
            seed=int(obj["seed"]),
            beta_range=tuple(float(v) for v in obj.get("beta_range", (0.0, 2.0))),
            path_grid_points=int(obj.get("path_grid_points", 101)),
            grid_points=int(obj.get("grid_points", 200)),
            mttf=mttf,
        )


def load_scenario(path) -> SimulationScenario:
    with open(path, "r", encoding="utf-8") as fh:
        return SimulationScenario.from_json(json.load(fh))


# ---------------------------------------------------------------------------
# Data generation
# ---------------------------------------------------------------------------


def _template_dataset(scenario: SimulationScenario) -> AddtDataset:
    """Dataset skeleton (cells and sizes) with placeholder responses.

    A positive ``time_zero_count`` adds a time-0 cell of that size to
    every temperature level.
    """
    temps = np.sort(np.asarray(scenario.temps_c, dtype=float))
    cell_level: list[int] = []
    cell_time: list[float] = []
    cell_size: list[int] = []
    for i, _ in enumerate(temps):
        times = sorted(scenario.times)
        if scenario.time_zero_count > 0 and 0.0 not in times:
            times = [0.0] + times
        for t in times:
            size = scenario.reps_per_cell
            if t == 0.0 and scenario.time_zero_count > 0:
                size = scenario.time_zero_count
            cell_level.append(i)
            cell_time.append(float(t))
            cell_size.append(size)
    y = np.zeros(int(sum(cell_size)))
    return AddtDataset(temps, cell_level, cell_time, cell_size, y,
                       time_unit=scenario.time_unit)


def _truth_spec(scenario: SimulationScenario, template: AddtDataset,
                stresses: StressSet):
    truth = scenario.truth
    strategy = QuantileKnots.default(truth.degree, truth.n_interior)
    return strategy.build(template, stresses, truth.beta)


def _true_cell_means(scenario: SimulationScenario, template: AddtDataset,
                     stresses: StressSet) -> np.ndarray:
    truth = scenario.truth
    if isinstance(truth, SplineTruth):
        from .bspline import cell_design

        spec = _truth_spec(scenario, template, stresses)
        return cell_design(template, stresses, spec, truth.beta) @ np.asarray(truth.gamma)
    x = np.asarray(stresses.x)[template.cell_level]
    return truth.beta0 + truth.beta1 * np.exp(truth.beta2 * x) * template.cell_time


def draw_cs_noise(rng: np.random.Generator, cell_sizes, sigma: float, rho: float) -> np.ndarray:
    """Compound-symmetric noise: shared cell effect plus individual error."""
    sizes = np.asarray(cell_sizes, dtype=int)
    n = int(sizes.sum())
    z_cell = rng.standard_normal(sizes.size)
    z_ind = rng.standard_normal(n)
    return sigma * (
        np.sqrt(rho) * np.repeat(z_cell, sizes) + np.sqrt(1.0 - rho) * z_ind
    )


def _generate(scenario: SimulationScenario, rng: np.random.Generator) -> AddtDataset:
    template = _template_dataset(scenario)
    stresses = stress_set(template, scenario.kelvin_offset)
    means = _true_cell_means(scenario, template, stresses)
    noise = draw_cs_noise(rng, template.cell_size, scenario.truth.sigma, scenario.truth.rho)
    y = np.repeat(means, template.cell_size) + noise
    return AddtDataset(
        template.temps_c,
        template.cell_level,
        template.cell_time,
        template.cell_size,
        y,
        time_unit=scenario.time_unit,
    )


def generate_spline_data(scenario: SimulationScenario, rng: np.random.Generator) -> AddtDataset:
    """One dataset from the spline truth with compound-symmetric errors."""
    if not isinstance(scenario.truth, SplineTruth):
        raise ValidationError("scenario truth is not a spline truth")
    return _generate(scenario, rng)


def generate_parametric_data(scenario: SimulationScenario, rng: np.random.Generator) -> AddtDataset:
    """One dataset from the linear Arrhenius truth."""
    if not isinstance(scenario.truth, ParametricTruth):
        raise ValidationError("scenario truth is not a parametric truth")
    return _generate(scenario, rng)


# ---------------------------------------------------------------------------
# Parametric comparator fits (least squares)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParametricFit:
    """Least-squares fit of one of the parametric degradation models."""

    model: str  # "linear" or "sigmoid"
    params: tuple[float, ...]
    sse: float
    converged: bool

    def mean(self, t, x) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.model == "linear":
            b0, b1, b2 = self.params
            return b0 + b1 * np.exp(b2 * np.asarray(x)) * t
        a, b0, b1, g = self.params
        c = np.exp(b0 + b1 * np.asarray(x))
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            ratio = np.where(t > 0, (t / c) ** g, 0.0)
        return a / (1.0 + ratio)

    def mttf(self, x_use: float, d_f: float) -> float:
        """Closed-form crossing time of the mean at stress x_use; NaN when
        the model never reaches the threshold."""
        if self.model == "linear":
            b0, b1, b2 = self.params
            slope = b1 * np.exp(b2 * x_use)
            if slope >= 0.0:
                return float("nan")
            t = (d_f - b0) / slope
            return float(t) if t > 0.0 else float("nan")
        a, b0, b1, g = self.params
        if a <= d_f or g <= 0.0:
            return float("nan")
        return float(np.exp(b0 + b1 * x_use) * (a / d_f - 1.0) ** (1.0 / g))


def _cell_arrays(data: AddtDataset, kelvin_offset: float):
    x_levels = arrhenius_x(data.temps_c, kelvin_offset)
    x_cell = np.atleast_1d(x_levels)[data.cell_level]
    sizes = data.cell_size.astype(float)
    ybar = data.cell_means()
    sq = np.add.reduceat(data.y * data.y, data.cell_start)
    ssw = float(np.maximum(sq - sizes * ybar * ybar, 0.0).sum())
    return x_cell, data.cell_time, sizes, ybar, ssw


def _linear_profile(b2: float, x_cell, t_cell, sizes, ybar):
    u = np.exp(b2 * x_cell) * t_cell
    A = np.column_stack([np.ones_like(u), u])
    G = A.T @ (sizes[:, None] * A)
    rhs = A.T @ (sizes * ybar)
    try:
        coef = np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        coef = np.linalg.lstsq(A * np.sqrt(sizes)[:, None], ybar * np.sqrt(sizes), rcond=None)[0]
    resid = ybar - A @ coef
    return coef, float(sizes @ (resid * resid))


def _fit_linear(data: AddtDataset, kelvin_offset: float) -> ParametricFit:
    x_cell, t_cell, sizes, ybar, ssw = _cell_arrays(data, kelvin_offset)

    def cell_sse(b2: float) -> float:
        return _linear_profile(b2, x_cell, t_cell, sizes, ybar)[1]

    grid = np.linspace(-1.0, 3.0, 81)
    vals = np.array([cell_sse(b) for b in grid])
    i = int(np.argmin(vals))
    res = minimize_scalar(
        cell_sse,
        bounds=(grid[max(0, i - 1)], grid[min(grid.size - 1, i + 1)]),
        method="bounded",
        options={"xatol": 1e-12},
    )
    b2_seed = float(res.x) if res.fun <= vals[i] else float(grid[i])
    coef, _ = _linear_profile(b2_seed, x_cell, t_cell, sizes, ybar)
    seed = np.array([coef[0], coef[1], b2_seed])

    def objective(theta):
        b0, b1, b2 = theta
        resid = ybar - (b0 + b1 * np.exp(b2 * x_cell) * t_cell)
        return float(sizes @ (resid * resid))

    starts = [seed]
    for mult in (0.95, 1.05, 0.8, 1.2):
        pert = seed.copy()
        pert[2] = b2_seed * mult if b2_seed != 0.0 else (mult - 1.0)
        starts.append(pert)
    best = None
    n_ok = 0
    for s in starts:
        r = minimize(
            objective,
            s,
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000, "maxfev": 8000},
        )
        n_ok += int(r.success)
        if best is None or r.fun < best.fun:
            best = r
    if best is None or (n_ok == 0 and not best.success):
        raise NumericalError("linear parametric fit did not converge from any start")
    return ParametricFit(
        model="linear",
        params=tuple(float(v) for v in best.x),
        sse=float(best.fun) + ssw,
        converged=bool(n_ok > 0 or best.success),
    )


def _sigmoid_seed(x_cell, t_cell, sizes, ybar) -> tuple[float, float, float]:
    a0 = float(ybar.max())
    # Per stress level, interpolate the time at which the mean crosses a0/2.
    xs, t50s = [], []
    for x in np.unique(x_cell):
        mask = x_cell == x
        tt, yy = t_cell[mask], ybar[mask]
        order = np.argsort(tt)
        tt, yy = tt[order], yy[order]
        half = a0 / 2.0
        crossed = np.where(yy <= half)[0]
        if crossed.size == 0 or crossed[0] == 0:
            continue
        j = crossed[0]
        frac = (yy[j - 1] - half) / (yy[j - 1] - yy[j])
        t50 = tt[j - 1] + frac * (tt[j] - tt[j - 1])
        if t50 > 0:
            xs.append(x)
            t50s.append(np.log(t50))
    if len(xs) >= 2:
        b1, b0 = np.polyfit(xs, t50s, 1)
    else:
        positive = t_cell[t_cell > 0]
        b0, b1 = float(np.log(np.median(positive))), 0.0
    return a0, float(b0), float(b1)


def _fit_sigmoid(data: AddtDataset, kelvin_offset: float) -> ParametricFit:
    x_cell, t_cell, sizes, ybar, ssw = _cell_arrays(data, kelvin_offset)
    a0, b0_seed, b1_seed = _sigmoid_seed(x_cell, t_cell, sizes, ybar)

    def objective(theta):
        a, b0, b1, g = theta
        if g <= 0.0:
            return np.inf
        c = np.exp(np.clip(b0 + b1 * x_cell, -500.0, 500.0))
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            ratio = np.where(t_cell > 0, (t_cell / c) ** g, 0.0)
        resid = ybar - a / (1.0 + ratio)
        val = float(sizes @ (resid * resid))
        return val if np.isfinite(val) else np.inf

    starts = [
        np.array([a0, b0_seed, b1_seed, g0]) for g0 in (0.7, 1.0, 1.5, 2.0)
    ]
    starts.append(np.array([a0 * 1.05, b0_seed + 0.5, b1_seed, 1.0]))
    best = None
    n_ok = 0
    for s in starts:
        r = minimize(
            objective,
            s,
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 6000, "maxfev": 12000},
        )
        n_ok += int(r.success)
        if np.isfinite(r.fun) and (best is None or r.fun < best.fun):
            best = r
    if best is None:
        raise NumericalError("sigmoid parametric fit did not converge from any start")
    return ParametricFit(
        model="sigmoid",
        params=tuple(float(v) for v in best.x),
        sse=float(best.fun) + ssw,
        converged=bool(n_ok > 0 or best.success),
    )


def fit_parametric(model_id: str, data: AddtDataset,
                   kelvin_offset: float = 273.15) -> ParametricFit:
    """Least-squares fit of a parametric comparator model.

    ``linear``: mean = b0 + b1 exp(b2 x) t (closed form in (b0, b1) given b2
    seeds the simplex search).  ``sigmoid``: mean = a / (1 + (t / exp(b0 +
    b1 x))^g).  Both use multi-start Nelder-Mead.
    """
    if model_id == "linear":
        return _fit_linear(data, kelvin_offset)
    if model_id == "sigmoid":
        return _fit_sigmoid(data, kelvin_offset)
    raise ValidationError(f"unknown parametric model {model_id!r}")


# ---------------------------------------------------------------------------
# Study metrics container
# ---------------------------------------------------------------------------


@dataclass
class StudyMetrics:
    study: str
    n_replicates: int
    failures: int
    seed: int
    conventions: str = _CONVENTIONS
    parameters: dict | None = None
    pointwise: dict | None = None
    coverage: dict | None = None
    path_metrics: dict | None = None
    mttf_metrics: dict | None = None
    aic_identity_max_abs_err: float = 0.0
    scenario: dict | None = None

    def to_json(self) -> dict:
        out = {
            "study": self.study,
            "n_replicates": self.n_replicates,
            "failures": self.failures,
            "seed": self.seed,
            "conventions": self.conventions,
            "aic_identity_max_abs_err": self.aic_identity_max_abs_err,
        }
        for key in ("parameters", "pointwise", "coverage", "path_metrics",
                    "mttf_metrics", "scenario"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        return out


def _param_stats(values: np.ndarray, truth: float) -> dict:
    mean = float(np.mean(values))
    sd = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return {
        "truth": truth,
        "mean": mean,
        "bias": mean - truth,
        "sd": sd,
        "mse": float(np.mean((values - truth) ** 2)),
    }


def _time_average(values: np.ndarray, grid: np.ndarray) -> float:
    return float(np.trapezoid(values, grid) / (grid[-1] - grid[0]))


# ---------------------------------------------------------------------------
# Recovery study
# ---------------------------------------------------------------------------


def _clamped_path_values(fit, grid: np.ndarray) -> np.ndarray:
    lo, hi = fit.spec.boundary
    return path_value(fit.spec, fit.gamma, np.clip(grid, lo, hi))


def _recovery_replicate(args):
    scenario, idx, n_boot, grid = args
    rng = np.random.default_rng([scenario.seed, idx])
    data = generate_spline_data(scenario, rng)
    stresses = stress_set(data, scenario.kelvin_offset)
    controls = FitControls(beta_range=scenario.beta_range)
    strategy = QuantileKnots.default(scenario.truth.degree, scenario.truth.n_interior)
    try:
        fit = profile_fit(data, stresses, strategy, controls)
    except AddtError:
        return (idx, None)
    rec = {
        "beta": fit.beta,
        "sigma": fit.sigma,
        "rho": fit.rho,
        "path": _clamped_path_values(fit, grid),
        "aic_err": abs(fit.aic - (-2.0 * fit.loglik + 2.0 * (fit.p_u + 3))),
    }
    if n_boot > 0:
        boot = resample_and_refit(
            fit, data, n_boot, seed=(scenario.seed, idx, 1), controls=controls
        )
        if boot.b_usable >= 2:
            truth = scenario.truth
            cover = {}
            for name, samples, est, true_val in (
                ("beta", boot.beta, fit.beta, truth.beta),
                ("sigma", boot.sigma, fit.sigma, truth.sigma),
                ("rho", boot.rho, fit.rho, truth.rho),
            ):
                q_lo, q_hi = quantile_ci(samples, scenario.alpha)
                b_lo, b_hi = bias_corrected_ci(samples, est, scenario.alpha)
                cover[name] = {
                    "quantile": bool(q_lo <= true_val <= q_hi),
                    "bias_corrected": bool(b_lo <= true_val <= b_hi),
                }
            rec["cover"] = cover
            rec["boot_failures"] = boot.failures
    return (idx, rec)


def run_recovery_study(scenario: SimulationScenario, workers: int = 1,
                       full: bool = False) -> StudyMetrics:
    """Repeatedly simulate, fit with the truth's degree and knot count, and
    accumulate parameter and baseline-path accuracy (plus CI coverage when
    the scenario requests bootstrap replicates)."""
    if scenario.study != "recovery":
        raise ValidationError("scenario is not a recovery study")
    reps = scenario.n_reps(full)
    n_boot = scenario.n_boot(full)
    template = _template_dataset(scenario)
    stresses = stress_set(template, scenario.kelvin_offset)
    spec_true = _truth_spec(scenario, template, stresses)
    lo, hi = spec_true.boundary
    grid = np.linspace(lo, hi, scenario.path_grid_points)
    g_true = path_value(spec_true, scenario.truth.gamma, grid)

    tasks = [(scenario, idx, n_boot, grid) for idx in range(reps)]
    results = _run_tasks(_recovery_replicate, tasks, workers)

    kept = [rec for _, rec in results if rec is not None]
    failures = reps - len(kept)
    if not kept:
        raise NumericalError("every replicate failed")
    truth = scenario.truth
    params = {
        "beta": _param_stats(np.array([r["beta"] for r in kept]), truth.beta),
        "sigma": _param_stats(np.array([r["sigma"] for r in kept]), truth.sigma),
        "rho": _param_stats(np.array([r["rho"] for r in kept]), truth.rho),
    }
    paths = np.vstack([r["path"] for r in kept])
    bias_t = paths.mean(axis=0) - g_true
    var_t = paths.var(axis=0)
    pointwise = {
        "grid": grid.tolist(),
        "true_path": g_true.tolist(),
        "bias": bias_t.tolist(),
        "var": var_t.tolist(),
        "mse": ((paths - g_true) ** 2).mean(axis=0).tolist(),
    }
    coverage = None
    covered = [r["cover"] for r in kept if "cover" in r]
    if covered:
        coverage = {
            name: {
                method: float(np.mean([c[name][method] for c in covered]))
                for method in ("quantile", "bias_corrected")
            }
            for name in ("beta", "sigma", "rho")
        }
        coverage["n_ci_replicates"] = len(covered)
        coverage["bootstrap_b"] = n_boot
    return StudyMetrics(
        study="recovery",
        n_replicates=reps,
        failures=failures,
        seed=scenario.seed,
        parameters=params,
        pointwise=pointwise,
        coverage=coverage,
        aic_identity_max_abs_err=float(max(r["aic_err"] for r in kept)),
        scenario=scenario.to_json(),
    )


# ---------------------------------------------------------------------------
# Misspecification study
# ---------------------------------------------------------------------------


def _misspec_replicate(args):
    scenario, idx, grid = args
    rng = np.random.default_rng([scenario.seed, idx])
    data = generate_parametric_data(scenario, rng)
    stresses = stress_set(data, scenario.kelvin_offset)
    controls = FitControls(beta_range=scenario.beta_range)
    x_max = stresses.x_max
    x_use = arrhenius_x(scenario.mttf.temp_c, scenario.kelvin_offset)
    d_f = scenario.mttf.threshold
    div = scenario.mttf.report_divisor
    try:
        true_fit = fit_parametric("linear", data, scenario.kelvin_offset)
        wrong_fit = fit_parametric("sigmoid", data, scenario.kelvin_offset)
        report = select_spec(data, stresses, degrees=(1, 2, 3), n_max=5,
                             controls=controls)
    except AddtError:
        return (idx, None)
    semi = report.winner_fit
    rec = {
        "path_true_model": true_fit.mean(grid, x_max),
        "path_wrong_model": wrong_fit.mean(grid, x_max),
        "path_semiparametric": _clamped_path_values(semi, grid),
        "mttf_true_model": true_fit.mttf(x_use, d_f) / div,
        "mttf_wrong_model": wrong_fit.mttf(x_use, d_f) / div,
        "aic_err": abs(semi.aic - (-2.0 * semi.loglik + 2.0 * (semi.p_u + 3))),
    }
    try:
        rec["mttf_semiparametric"] = (
            semiparametric_mttf(semi, scenario.mttf.temp_c, d_f) / div
        )
    except AddtError:
        rec["mttf_semiparametric"] = float("nan")
    return (idx, rec)


def run_misspec_study(scenario: SimulationScenario, workers: int = 1,
                      full: bool = False) -> StudyMetrics:
    """Fit the true, wrong, and semi-parametric models to data from the
    parametric truth; report integrated baseline-path error and MTTF
    accuracy at the use condition."""
    if scenario.study != "misspec":
        raise ValidationError("scenario is not a misspec study")
    if scenario.mttf is None:
        raise ValidationError("misspec scenario needs an mttf section")
    reps = scenario.n_reps(full)
    truth = scenario.truth
    t_m = float(max(scenario.times))
    grid = np.linspace(0.0, t_m, scenario.grid_points)
    x_levels = arrhenius_x(np.asarray(scenario.temps_c), scenario.kelvin_offset)
    x_max = float(np.max(x_levels))
    g_true = truth.beta0 + truth.beta1 * np.exp(truth.beta2 * x_max) * grid
    x_use = arrhenius_x(scenario.mttf.temp_c, scenario.kelvin_offset)
    true_mttf = (
        (scenario.mttf.threshold - truth.beta0)
        / (truth.beta1 * np.exp(truth.beta2 * x_use))
        / scenario.mttf.report_divisor
    )

    tasks = [(scenario, idx, grid) for idx in range(reps)]
    results = _run_tasks(_misspec_replicate, tasks, workers)
    kept = [rec for _, rec in results if rec is not None]
    failures = reps - len(kept)
    if not kept:
        raise NumericalError("every replicate failed")

    path_metrics = {}
    mttf_metrics = {"unit": f"{scenario.time_unit} / {scenario.mttf.report_divisor}",
                    "true_value": float(true_mttf)}
    for model in ("true_model", "wrong_model", "semiparametric"):
        paths = np.vstack([r[f"path_{model}"] for r in kept])
        bias_t = paths.mean(axis=0) - g_true
        var_t = paths.var(axis=0)
        ibias = float(np.sqrt(_time_average(bias_t**2, grid)))
        rivar = float(np.sqrt(_time_average(var_t, grid)))
        path_metrics[model] = {
            "ibias": ibias,
            "rivar": rivar,
            "rimse": float(np.sqrt(ibias**2 + rivar**2)),
        }
        vals = np.array([r[f"mttf_{model}"] for r in kept])
        ok = vals[np.isfinite(vals)]
        stats = _param_stats(ok, float(true_mttf)) if ok.size else {}
        stats["rmse"] = float(np.sqrt(np.mean((ok - true_mttf) ** 2))) if ok.size else None
        stats["n_missing"] = int(vals.size - ok.size)
        mttf_metrics[model] = stats
    return StudyMetrics(
        study="misspec",
        n_replicates=reps,
        failures=failures,
        seed=scenario.seed,
        path_metrics=path_metrics,
        mttf_metrics=mttf_metrics,
        pointwise={
            "grid": grid.tolist(),
            "true_path": g_true.tolist(),
        },
        aic_identity_max_abs_err=float(max(r["aic_err"] for r in kept)),
        scenario=scenario.to_json(),
    )


def _run_tasks(fn, tasks, workers: int):
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fn, tasks, chunksize=1))
    else:
        results = [fn(t) for t in tasks]
    results.sort(key=lambda item: item[0])
    return results


def write_study_csvs(metrics: StudyMetrics, out_dir) -> list[str]:
    """CSV grids for external plotting; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[str] = []
    if metrics.pointwise and "mse" in metrics.pointwise:
        path = out_dir / "pointwise_path_mse.csv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("time,true_path,bias,var,mse\n")
            pw = metrics.pointwise
            for row in zip(pw["grid"], pw["true_path"], pw["bias"], pw["var"], pw["mse"]):
                fh.write(",".join(repr(v) for v in row) + "\n")
        written.append(str(path))
    if metrics.coverage:
        path = out_dir / "ci_coverage.csv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("parameter,method,coverage\n")
            for name in ("beta", "sigma", "rho"):
                for method in ("quantile", "bias_corrected"):
                    fh.write(f"{name},{method},{metrics.coverage[name][method]!r}\n")
        written.append(str(path))
    if metrics.path_metrics:
        path = out_dir / "path_imse.csv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("model,ibias,rivar,rimse\n")
            for model, row in metrics.path_metrics.items():
                fh.write(f"{model},{row['ibias']!r},{row['rivar']!r},{row['rimse']!r}\n")
        written.append(str(path))
    if metrics.mttf_metrics:
        path = out_dir / "mttf_summary.csv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("model,mean,bias,sd,rmse,n_missing\n")
            for model in ("true_model", "wrong_model", "semiparametric"):
                row = metrics.mttf_metrics.get(model, {})
                if row:
                    fh.write(
                        f"{model},{row['mean']!r},{row['bias']!r},"
                        f"{row['sd']!r},{row['rmse']!r},{row['n_missing']}\n"
                    )
        written.append(str(path))
    return written
