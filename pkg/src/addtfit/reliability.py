"""Degradation-path prediction and mean time to failure at a use condition.

Predictions never extrapolate: the spline is only trusted between its
boundary knots, and failure thresholds below the lowest observed reading
are refused.
"""

from __future__ import annotations

import numpy as np

from .bspline import basis_matrix, path_value
from .dataset import AddtDataset, arrhenius_x
from .errors import ExtrapolationError, ValidationError
from .fit import ModelFit

__all__ = [
    "extrapolation_floor",
    "predict_path",
    "baseline_initial_level",
    "mttf",
]

_BISECT_RTOL = 1e-10


def extrapolation_floor(data: AddtDataset) -> float:
    """Lowest reading anywhere in the data; the spline cannot go below it."""
    return float(data.y.min())


def _stress_distance(fit: ModelFit, temp_c: float) -> float:
    return fit.x_max - arrhenius_x(temp_c, fit.kelvin_offset)


def predict_path(fit: ModelFit, temp_c: float, times) -> np.ndarray:
    """Mean degradation at the given temperature and raw times."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    s = _stress_distance(fit, temp_c)
    factor = float(np.exp(fit.beta * s))
    z = times / factor
    lo, hi = fit.spec.boundary
    if np.any(z > hi) or np.any(z < lo):
        raise ExtrapolationError(
            f"time out of range at {temp_c} C: admissible times are "
            f"[{lo * factor}, {hi * factor}] {fit.time_unit}"
        )
    return basis_matrix(fit.spec, z) @ np.asarray(fit.gamma)


def baseline_initial_level(fit: ModelFit) -> float:
    """Path value at the lower boundary knot (the earliest evaluable time)."""
    return float(path_value(fit.spec, fit.gamma, fit.spec.boundary[0])[0])


def mttf(fit: ModelFit, temp_use_c: float, threshold: float, relative: bool = False) -> float:
    """Time at which the mean path at ``temp_use_c`` crosses the threshold.

    A relative threshold is resolved against the path value at the lower
    boundary knot.  Solves on the warped scale by bisection (the path is
    monotone, so the crossing brackets), then rescales by the time-scale
    factor; flat segments report their earliest crossing time.
    """
    gamma = np.asarray(fit.gamma)
    lo, hi = fit.spec.boundary
    g0 = baseline_initial_level(fit)
    d_f = threshold * g0 if relative else float(threshold)
    if d_f < fit.y_floor:
        raise ExtrapolationError(
            f"threshold {d_f} is below the lowest observed degradation "
            f"{fit.y_floor}; extrapolation below it is not supported"
        )
    if d_f >= g0:
        raise ValidationError(
            f"threshold {d_f} is at or above the initial level {g0}; "
            "failure time is not defined"
        )
    g_end = float(path_value(fit.spec, gamma, hi)[0])
    if d_f < g_end:
        raise ExtrapolationError(
            f"path never reaches {d_f} inside the knot interval "
            f"(value at the boundary is {g_end})"
        )

    def below(z: float) -> bool:
        return float(path_value(fit.spec, gamma, z)[0]) <= d_f

    z_lo, z_hi = lo, hi  # path(z_lo) > d_f, path(z_hi) <= d_f
    while (z_hi - z_lo) > _BISECT_RTOL * max(1.0, abs(z_hi)):
        mid = 0.5 * (z_lo + z_hi)
        if below(mid):
            z_hi = mid
        else:
            z_lo = mid
    z_star = z_hi
    s = _stress_distance(fit, temp_use_c)
    return float(z_star * np.exp(fit.beta * s))
