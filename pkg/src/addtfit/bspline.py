"""Clamped B-spline bases, acceleration-warped designs, and knot strategies.

The basis follows the textbook two-term recursion on a knot sequence whose
boundary values are repeated degree+1 times.  Spans are half-open except at
the upper boundary, where the last nonvanishing basis function takes the
value 1, so the largest observed warped time stays evaluable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import AddtDataset, StressSet
from .errors import ExtrapolationError, InfeasibleBetaError, ValidationError

__all__ = [
    "SplineSpec",
    "QuantileKnots",
    "FixedKnots",
    "eta",
    "basis_eval",
    "basis_matrix",
    "path_value",
    "path_derivative",
    "path_is_monotone",
    "design_matrix",
    "cell_design",
    "cell_warped_times",
    "default_interior_knots",
    "knots_at_quantiles",
    "knot_strategy_from_json",
]


@dataclass(frozen=True)
class SplineSpec:
    """Degree, interior knots, and boundary knots of one clamped basis."""

    degree: int
    interior: tuple[float, ...]
    boundary: tuple[float, float]

    def __post_init__(self):
        if self.degree < 0 or self.degree != int(self.degree):
            raise ValidationError(f"degree must be a nonnegative integer: {self.degree}")
        lo, hi = self.boundary
        if not lo < hi:
            raise ValidationError(f"boundary knots must satisfy lo < hi: {self.boundary}")
        knots = (lo, *self.interior, hi)
        if any(a > b for a, b in zip(knots, knots[1:])):
            raise ValidationError(f"knots must be nondecreasing: {knots}")

    @property
    def n_interior(self) -> int:
        return len(self.interior)

    @property
    def p(self) -> int:
        """Number of basis functions: interior knots + degree + 1."""
        return self.n_interior + self.degree + 1

    @property
    def knots(self) -> np.ndarray:
        """Full knot sequence with boundaries repeated degree+1 times each."""
        lo, hi = self.boundary
        q = self.degree
        return np.asarray([lo] * (q + 1) + list(self.interior) + [hi] * (q + 1))

    def to_json(self) -> dict:
        return {
            "degree": self.degree,
            "interior_knots": list(self.interior),
            "boundary": list(self.boundary),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SplineSpec":
        return cls(
            degree=int(obj["degree"]),
            interior=tuple(float(v) for v in obj["interior_knots"]),
            boundary=(float(obj["boundary"][0]), float(obj["boundary"][1])),
        )


def eta(t, s_i, beta):
    """Warped time t / exp(beta * s_i).

    The hottest level has s_i = 0 and keeps its raw clock.  An enormous
    beta * s_i overflows exp and the warped time saturates to 0.
    """
    with np.errstate(over="ignore"):
        scale = np.exp(np.multiply(beta, s_i))
        out = np.divide(t, scale)
    return out


def _basis_levels(spec: SplineSpec, z: np.ndarray, upto: int) -> np.ndarray:
    """Evaluate all degree-`upto` basis functions at z; shape (K-1-upto, m)."""
    T = spec.knots
    K = T.size
    m = z.size
    B = ((T[:-1, None] <= z[None, :]) & (z[None, :] < T[1:, None])).astype(float)
    at_top = z == spec.boundary[1]
    if at_top.any():
        nonempty = np.nonzero(np.diff(T) > 0)[0]
        B[nonempty[-1], at_top] = 1.0
    for k in range(1, upto + 1):
        nb = K - 1 - k
        new = np.zeros((nb, m))
        for j in range(nb):
            left_den = T[j + k] - T[j]
            right_den = T[j + k + 1] - T[j + 1]
            if left_den > 0.0:
                new[j] += (z - T[j]) / left_den * B[j]
            if right_den > 0.0:
                new[j] += (T[j + k + 1] - z) / right_den * B[j + 1]
        B = new
    return B


def basis_matrix(spec: SplineSpec, z) -> np.ndarray:
    """Rows of basis values at each z; shape (len(z), p)."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    lo, hi = spec.boundary
    if np.any(z < lo) or np.any(z > hi):
        bad = z[(z < lo) | (z > hi)][0]
        raise ExtrapolationError(
            f"warped time {bad} outside the knot interval [{lo}, {hi}]"
        )
    return _basis_levels(spec, z, spec.degree).T


def basis_eval(spec: SplineSpec, z: float) -> np.ndarray:
    """Length-p vector of basis values at a single warped time."""
    return basis_matrix(spec, z)[0]


def path_value(spec: SplineSpec, gamma, z) -> np.ndarray:
    """Fitted path sum_l gamma_l B_l(z) at each z."""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (spec.p,):
        raise ValidationError(f"expected {spec.p} coefficients, got {gamma.shape}")
    return basis_matrix(spec, z) @ gamma


def path_derivative(spec: SplineSpec, gamma, z) -> np.ndarray:
    """First derivative of the path with respect to warped time.

    Coefficient-difference form: sum over l >= 2 of
    q (gamma_l - gamma_{l-1}) / (d_{l+q} - d_l) times the degree-(q-1)
    basis function on knots d_l..d_{l+q}.
    """
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (spec.p,):
        raise ValidationError(f"expected {spec.p} coefficients, got {gamma.shape}")
    z = np.atleast_1d(np.asarray(z, dtype=float))
    lo, hi = spec.boundary
    if np.any(z < lo) or np.any(z > hi):
        raise ExtrapolationError("derivative requested outside the knot interval")
    q = spec.degree
    if q == 0:
        return np.zeros_like(z)
    T = spec.knots
    lower = _basis_levels(spec, z, q - 1)  # index j spans T[j..j+q]
    out = np.zeros_like(z)
    for j in range(1, spec.p):
        den = T[j + q] - T[j]
        if den > 0.0:
            out += q * (gamma[j] - gamma[j - 1]) / den * lower[j]
    return out


def path_is_monotone(spec: SplineSpec, gamma) -> bool:
    """True iff coefficients never increase (sufficient for a decreasing path)."""
    gamma = np.asarray(gamma, dtype=float)
    return bool(np.all(np.diff(gamma) <= 0.0))


def cell_warped_times(data: AddtDataset, stresses: StressSet, beta: float) -> np.ndarray:
    """Warped time of every (level, time) cell, in dataset cell order."""
    s = np.asarray(stresses.s)[data.cell_level]
    return eta(data.cell_time, s, beta)


def cell_design(
    data: AddtDataset, stresses: StressSet, spec: SplineSpec, beta: float
) -> np.ndarray:
    """Cell-level design matrix (one row per cell); replicates share rows."""
    z = cell_warped_times(data, stresses, beta)
    lo, hi = spec.boundary
    if np.any(z < lo) or np.any(z > hi):
        raise InfeasibleBetaError(
            beta,
            f"beta={beta}: warped times span [{z.min()}, {z.max()}] outside "
            f"knot interval [{lo}, {hi}]",
        )
    return basis_matrix(spec, z)


def design_matrix(
    data: AddtDataset, stresses: StressSet, spec: SplineSpec, beta: float
) -> np.ndarray:
    """Full design matrix with one row per reading in (i, j, k) order."""
    return np.repeat(cell_design(data, stresses, spec, beta), data.cell_size, axis=0)


def knots_at_quantiles(
    data: AddtDataset, stresses: StressSet, beta: float, levels
) -> tuple[np.ndarray, tuple[float, float]]:
    """Interior knots at the given quantile levels of the pooled warped times.

    The pooled sample has one entry per cell; boundaries are its min and max.
    """
    z = cell_warped_times(data, stresses, beta)
    levels = np.asarray(levels, dtype=float)
    if np.any(levels <= 0.0) or np.any(levels >= 1.0):
        raise ValidationError(f"quantile levels must lie in (0, 1): {levels}")
    if np.unique(z).size < levels.size + 2:
        raise ValidationError(
            f"too few distinct warped times ({np.unique(z).size}) for "
            f"{levels.size} interior knots"
        )
    interior = np.quantile(z, np.sort(levels))
    return interior, (float(z.min()), float(z.max()))


def default_interior_knots(
    data: AddtDataset, stresses: StressSet, beta: float, n_knots: int
) -> tuple[np.ndarray, tuple[float, float]]:
    """Equally-spaced quantile knots at levels b/(N+1), b = 1..N."""
    if n_knots < 1:
        raise ValidationError(f"need at least one interior knot, got {n_knots}")
    levels = np.arange(1, n_knots + 1) / (n_knots + 1)
    return knots_at_quantiles(data, stresses, beta, levels)


@dataclass(frozen=True)
class QuantileKnots:
    """Knot strategy: quantile levels whose locations are rebuilt per beta."""

    degree: int
    levels: tuple[float, ...] = ()

    @classmethod
    def default(cls, degree: int, n_knots: int) -> "QuantileKnots":
        levels = tuple(b / (n_knots + 1) for b in range(1, n_knots + 1))
        return cls(degree=degree, levels=levels)

    def build(self, data: AddtDataset, stresses: StressSet, beta: float) -> SplineSpec:
        z = cell_warped_times(data, stresses, beta)
        boundary = (float(z.min()), float(z.max()))
        if not self.levels:
            return SplineSpec(self.degree, (), boundary)
        interior, boundary = knots_at_quantiles(data, stresses, beta, self.levels)
        return SplineSpec(self.degree, tuple(float(v) for v in interior), boundary)

    def to_json(self) -> dict:
        return {"kind": "quantile", "degree": self.degree, "levels": list(self.levels)}


@dataclass(frozen=True)
class FixedKnots:
    """Knot strategy: one spec used verbatim at every beta."""

    spec: SplineSpec

    @property
    def degree(self) -> int:
        return self.spec.degree

    def build(self, data: AddtDataset, stresses: StressSet, beta: float) -> SplineSpec:
        return self.spec

    def to_json(self) -> dict:
        return {"kind": "fixed", "spec": self.spec.to_json()}


def knot_strategy_from_json(obj: dict):
    if obj["kind"] == "quantile":
        return QuantileKnots(degree=int(obj["degree"]),
                             levels=tuple(float(v) for v in obj["levels"]))
    if obj["kind"] == "fixed":
        return FixedKnots(spec=SplineSpec.from_json(obj["spec"]))
    raise ValidationError(f"unknown knot strategy kind {obj.get('kind')!r}")
