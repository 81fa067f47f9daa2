"""Nonparametric bootstrap: residual decomposition, resampled refits, CIs.

Raw residuals split into a shrunken cell effect and an individual error.
Both pools are rescaled so their empirical second moments match the fitted
variance components before resampling, which removes the bias of naive
residual resampling.  Replicates are refit with the original fit's knot
strategy (no re-selection) and a re-profiled slope.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .bspline import cell_design, path_value
from .dataset import AddtDataset, stress_set
from .errors import AddtError, ValidationError
from .fit import FitControls, ModelFit, profile_fit
from .reliability import mttf as _mttf

__all__ = [
    "ResidualDecomposition",
    "BootstrapResult",
    "decompose_residuals",
    "resample_and_refit",
    "quantile_ci",
    "bias_corrected_ci",
    "bias_corrected_levels",
]


@dataclass(frozen=True)
class ResidualDecomposition:
    """Cell effects, individual errors, and their bias-corrected versions."""

    fitted: np.ndarray       # (n,) fitted values at the estimated slope
    u_hat: np.ndarray        # (C,) shrunken cell-mean residuals
    e_hat: np.ndarray        # (n,) leftover individual residuals
    sigma_u: float           # sqrt(rho) * sigma
    sigma_e: float           # sqrt(1 - rho) * sigma
    u_corrected: np.ndarray  # (C,) rescaled so mean square equals sigma_u^2
    e_corrected: np.ndarray  # (n,) rescaled per cell to match sigma_e^2


def decompose_residuals(fit: ModelFit, data: AddtDataset) -> ResidualDecomposition:
    """Split raw residuals into cell effects and individual errors.

    The cell effect is the compound-symmetry shrinkage of the cell-mean
    residual: u = n rho / (1 + (n-1) rho) * rbar.  With rho = 0 the cell
    effects vanish and all mass stays in the individual errors.
    """
    stresses = stress_set(data, fit.kelvin_offset)
    fitted_cells = cell_design(data, stresses, fit.spec, fit.beta) @ np.asarray(fit.gamma)
    fitted = np.repeat(fitted_cells, data.cell_size)
    r = data.y - fitted
    sizes = data.cell_size.astype(float)
    rbar = np.add.reduceat(r, data.cell_start) / sizes
    shrink = sizes * fit.rho / (1.0 + (sizes - 1.0) * fit.rho)
    u_hat = shrink * rbar
    e_hat = r - np.repeat(u_hat, data.cell_size)

    sigma_u = np.sqrt(fit.rho) * fit.sigma
    sigma_e = np.sqrt(1.0 - fit.rho) * fit.sigma

    u_ms = float(np.mean(u_hat * u_hat))
    u_corrected = sigma_u / np.sqrt(u_ms) * u_hat if u_ms > 0.0 else np.zeros_like(u_hat)

    e_ms_cell = np.add.reduceat(e_hat * e_hat, data.cell_start) / sizes
    cell_scale = np.where(e_ms_cell > 0.0, sigma_e / np.sqrt(np.where(e_ms_cell > 0.0, e_ms_cell, 1.0)), 0.0)
    e_corrected = np.repeat(cell_scale, data.cell_size) * e_hat

    return ResidualDecomposition(
        fitted=fitted,
        u_hat=u_hat,
        e_hat=e_hat,
        sigma_u=float(sigma_u),
        sigma_e=float(sigma_e),
        u_corrected=u_corrected,
        e_corrected=e_corrected,
    )


@dataclass(frozen=True)
class BootstrapResult:
    """Replicate draws of the parameters plus optional derived quantities."""

    b_requested: int
    seed: tuple[int, ...]
    replicate_index: np.ndarray  # (B_ok,) indices of usable replicates
    beta: np.ndarray
    sigma: np.ndarray
    rho: np.ndarray
    failures: int
    mttf: np.ndarray | None = None        # NaN when a replicate path misses the threshold
    path_grid: np.ndarray | None = None   # warped-time grid for the baseline path draws
    path_values: np.ndarray | None = None  # (B_ok, G)

    @property
    def b_usable(self) -> int:
        return int(self.beta.size)

    def to_json(self) -> dict:
        out = {
            "b_requested": self.b_requested,
            "seed": list(self.seed),
            "failures": self.failures,
            "replicate_index": self.replicate_index.tolist(),
            "beta": self.beta.tolist(),
            "sigma": self.sigma.tolist(),
            "rho": self.rho.tolist(),
        }
        if self.mttf is not None:
            out["mttf"] = self.mttf.tolist()
        if self.path_grid is not None:
            out["path_grid"] = self.path_grid.tolist()
            out["path_values"] = self.path_values.tolist()
        return out


def _clamped_path(fit: ModelFit, grid: np.ndarray) -> np.ndarray:
    lo, hi = fit.spec.boundary
    return path_value(fit.spec, fit.gamma, np.clip(grid, lo, hi))


def _one_replicate(args):
    (fit, data, decomp, seed_key, m, controls, mttf_query, path_grid) = args
    rng = np.random.default_rng(list(seed_key) + [m])
    n_cells = decomp.u_hat.size
    u_draw = decomp.u_corrected[rng.integers(0, n_cells, size=n_cells)]
    e_draw = decomp.e_corrected[rng.integers(0, data.n, size=data.n)]
    y_star = decomp.fitted + np.repeat(u_draw, data.cell_size) + e_draw
    stresses = stress_set(data, fit.kelvin_offset)
    try:
        refit = profile_fit(data, stresses, fit.knots, controls, y_override=y_star)
    except AddtError:
        return (m, None)
    if not refit.converged:
        return (m, None)
    row = {"beta": refit.beta, "sigma": refit.sigma, "rho": refit.rho}
    if mttf_query is not None:
        temp_c, threshold, relative = mttf_query
        try:
            row["mttf"] = _mttf(refit, temp_c, threshold, relative=relative)
        except AddtError:
            row["mttf"] = np.nan
    if path_grid is not None:
        row["path"] = _clamped_path(refit, path_grid)
    return (m, row)


def resample_and_refit(
    fit: ModelFit,
    data: AddtDataset,
    b: int,
    seed: int | tuple[int, ...],
    controls: FitControls | None = None,
    mttf_query: tuple[float, float, bool] | None = None,
    path_grid: np.ndarray | None = None,
    workers: int = 1,
) -> BootstrapResult:
    """Draw B replicate datasets and refit each one.

    Cell effects resample across cells, individual errors across readings.
    Replicate m uses its own RNG stream keyed by (seed, m), so results do
    not depend on worker scheduling; failures (non-convergence or errors)
    are counted and excluded.
    """
    if b < 1:
        raise ValidationError(f"need at least one replicate, got {b}")
    controls = controls or FitControls()
    seed_key = (seed,) if isinstance(seed, int) else tuple(int(s) for s in seed)
    decomp = decompose_residuals(fit, data)
    if path_grid is not None:
        path_grid = np.asarray(path_grid, dtype=float)
    tasks = [
        (fit, data, decomp, seed_key, m, controls, mttf_query, path_grid)
        for m in range(1, b + 1)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_replicate, tasks, chunksize=8))
    else:
        results = [_one_replicate(t) for t in tasks]
    results.sort(key=lambda item: item[0])

    kept = [(m, row) for m, row in results if row is not None]
    failures = b - len(kept)
    idx = np.array([m for m, _ in kept], dtype=int)
    beta = np.array([row["beta"] for _, row in kept])
    sigma = np.array([row["sigma"] for _, row in kept])
    rho = np.array([row["rho"] for _, row in kept])
    mttf_arr = None
    if mttf_query is not None:
        mttf_arr = np.array([row["mttf"] for _, row in kept])
    paths = None
    if path_grid is not None:
        paths = (
            np.vstack([row["path"] for _, row in kept])
            if kept
            else np.empty((0, path_grid.size))
        )
    return BootstrapResult(
        b_requested=b,
        seed=seed_key,
        replicate_index=idx,
        beta=beta,
        sigma=sigma,
        rho=rho,
        failures=failures,
        mttf=mttf_arr,
        path_grid=path_grid,
        path_values=paths,
    )


def quantile_ci(samples, alpha: float) -> tuple[float, float]:
    """Equal-tail interval from type-7 (linear interpolation) quantiles."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        raise ValidationError("need at least 2 bootstrap samples for a CI")
    lo, hi = np.quantile(samples, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(lo), float(hi)


def bias_corrected_levels(q: float, alpha: float) -> tuple[float, float]:
    """Adjusted quantile levels Phi(2 z_q + z_{a/2}) and Phi(2 z_q + z_{1-a/2})."""
    z_q = norm.ppf(q)
    if z_q == 0.0:  # exact reduction to the plain quantile levels
        return alpha / 2.0, 1.0 - alpha / 2.0
    return (
        float(norm.cdf(2.0 * z_q + norm.ppf(alpha / 2.0))),
        float(norm.cdf(2.0 * z_q + norm.ppf(1.0 - alpha / 2.0))),
    )


def bias_corrected_ci(samples, theta_hat: float, alpha: float) -> tuple[float, float]:
    """Bias-corrected percentile interval.

    The quantile levels are shifted by twice the normal score of the
    fraction of replicates below the point estimate; at q = 0.5 this is
    exactly the plain quantile interval.  Degenerate q in {0, 1} falls
    back to the quantile interval with a warning.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        raise ValidationError("need at least 2 bootstrap samples for a CI")
    q = float(np.mean(samples < theta_hat))
    if q <= 0.0 or q >= 1.0:
        warnings.warn(
            f"all bootstrap samples on one side of the estimate (q={q}); "
            "falling back to the quantile CI"
        )
        return quantile_ci(samples, alpha)
    lo_level, hi_level = bias_corrected_levels(q, alpha)
    lo, hi = np.quantile(samples, [lo_level, hi_level])
    return float(lo), float(hi)
