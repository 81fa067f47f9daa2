"""Monotone-constrained GLS, approximate REML, and profile-likelihood fitting.

The estimator alternates a monotone-cone quadratic program for the spline
coefficients with a one-dimensional restricted-likelihood search for the
within-cell correlation (the error scale has a closed form), then profiles
the acceleration slope over a grid refined by golden section.

Replicates within a cell share a design row, so every heavy computation
collapses to cell-level arrays: the weighted cell means carry all the
information about the coefficients, and the within-cell scatter enters
only through a single sum of squares.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from . import covariance
from .bspline import (
    FixedKnots,
    QuantileKnots,
    SplineSpec,
    cell_design,
    knot_strategy_from_json,
)
from .covariance import ErrorStructure, rho_lower_bound
from .dataset import AddtDataset, StressSet
from .errors import (
    InfeasibleBetaError,
    NumericalError,
    RankDeficiencyError,
    ValidationError,
)

__all__ = [
    "FitControls",
    "ModelFit",
    "BetaFitResult",
    "monotone_gls",
    "unique_design",
    "reml_sigma",
    "reml_rho",
    "fit_given_beta",
    "profile_fit",
]

_LOG_2PI = math.log(2.0 * math.pi)
_SIGMA_FLOOR = 1e-10  # used only inside log-likelihoods for degenerate exact fits


@dataclass(frozen=True)
class FitControls:
    """Tuning knobs for the iterative fit and the profile search."""

    beta_range: tuple[float, float] = (0.0, 5.0)
    grid_points: int = 21
    beta_tol: float = 1e-4
    max_iter: int = 200
    param_tol: float = 1e-7
    rho_tol: float = 1e-6
    rho_coarse: int = 13
    track_loglik: bool = False

    def __post_init__(self):
        lo, hi = self.beta_range
        if lo < 0.0 or hi <= lo:
            raise ValidationError(f"beta range must satisfy 0 <= lo < hi: {self.beta_range}")
        if self.grid_points < 2:
            raise ValidationError("need at least 2 profile grid points")


# ---------------------------------------------------------------------------
# Monotone-cone least squares (active set on adjacent-difference constraints)
# ---------------------------------------------------------------------------


@dataclass
class _MonotoneLsResult:
    gamma: np.ndarray
    group_starts: tuple[int, ...]
    multipliers: np.ndarray
    iterations: int


def _spread(values: np.ndarray, starts: list[int], p: int) -> np.ndarray:
    reps = np.diff(starts + [p])
    return np.repeat(values, reps)


def _solve_equality(A: np.ndarray, b: np.ndarray, starts: list[int]) -> np.ndarray:
    Am = np.add.reduceat(A, starts, axis=1)
    G = Am.T @ Am
    rhs = Am.T @ b
    try:
        return np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(Am, b, rcond=None)[0]


def _group_multipliers(grad: np.ndarray, starts: list[int], p: int) -> np.ndarray:
    """Lagrange multipliers of the tight constraints, as prefix sums of the
    gradient inside each merged group; entry i corresponds to gamma_i = gamma_{i-1}."""
    lam = np.full(p, np.nan)
    bounds = starts + [p]
    for a, e in zip(bounds[:-1], bounds[1:]):
        if e - a > 1:
            lam[a + 1 : e] = np.cumsum(grad[a : e - 1])
    return lam


def solve_monotone_ls(
    A: np.ndarray, b: np.ndarray, warm_starts: tuple[int, ...] | None = None
) -> _MonotoneLsResult:
    """Minimize ||A g - b||^2 subject to g_1 >= g_2 >= ... >= g_p.

    Primal active-set method whose working sets are contiguous merges of
    adjacent coefficients; each subproblem is an ordinary least squares on
    the group-summed columns.  Returns exactly tied values inside merged
    groups.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    p = A.shape[1]
    scale = 1.0 + float(np.abs(b).max(initial=0.0))
    feas_tol = 1e-12 * scale
    max_iter = 40 * p * p + 40

    starts = list(warm_starts) if warm_starts else [0]
    v = _solve_equality(A, b, starts)
    if len(starts) > 1 and np.any(np.diff(v) > feas_tol):
        starts = [0]  # warm start infeasible; restart from the fully merged apex
        v = _solve_equality(A, b, starts)
    gamma_cur = _spread(v, starts, p)

    lam = np.full(p, np.nan)
    for it in range(1, max_iter + 1):
        v = _solve_equality(A, b, starts)
        gamma_star = _spread(v, starts, p)
        diffs = np.diff(v)
        if diffs.size and diffs.max(initial=-np.inf) > feas_tol:
            # Step from the feasible iterate toward gamma_star until a
            # currently-inactive constraint blocks; merge at the blocker.
            d = gamma_star - gamma_cur
            alpha = 1.0
            blocker = -1
            for j in range(1, len(starts)):
                i = starts[j]
                dc = d[i] - d[i - 1]
                if dc > feas_tol:
                    c = gamma_cur[i] - gamma_cur[i - 1]
                    a_j = max(0.0, -c / dc)
                    if a_j < alpha:
                        alpha = a_j
                        blocker = j
            if blocker < 0:
                # Degenerate step: merge at the largest violation directly.
                blocker = int(np.argmax(diffs)) + 1
                alpha = 0.0
            gamma_cur = gamma_cur + alpha * d
            del starts[blocker]
            continue
        gamma_cur = gamma_star
        grad = A.T @ (A @ gamma_cur - b)
        lam = _group_multipliers(grad, starts, p)
        mult_tol = 1e-9 * (1.0 + float(np.abs(grad).max(initial=0.0)))
        with np.errstate(invalid="ignore"):
            neg = np.where(np.nan_to_num(lam, nan=0.0) < -mult_tol)[0]
        if neg.size == 0:
            break
        worst = neg[np.argmin(lam[neg])]
        starts = sorted(set(starts) | {int(worst)})
    else:
        raise NumericalError("monotone least squares did not terminate")

    # Merge any numerically-tied adjacent groups so ties are exact.
    tie_tol = 1e-8 * (1.0 + abs(float(gamma_cur[0])))
    while True:
        v = _solve_equality(A, b, starts)
        diffs = np.diff(v)
        close = np.where(diffs > -tie_tol)[0]
        if close.size == 0 or len(starts) == 1:
            break
        starts = [s for j, s in enumerate(starts) if j - 1 not in close]
        if not starts or starts[0] != 0:
            starts = [0] + starts
    gamma = _spread(v, starts, p)
    grad = A.T @ (A @ gamma - b)
    lam = _group_multipliers(grad, starts, p)
    return _MonotoneLsResult(gamma, tuple(starts), lam, it)


def _empty_support_columns(X: np.ndarray) -> tuple[int, ...]:
    return tuple(int(j) for j in np.where(np.abs(X).max(axis=0) == 0.0)[0])


def _check_full_rank(X: np.ndarray) -> None:
    p = X.shape[1]
    if np.linalg.matrix_rank(X) < p:
        empty = _empty_support_columns(X)
        if empty:
            raise RankDeficiencyError(
                f"basis functions {list(empty)} receive no data support "
                "(empty knot spans)",
                empty_columns=empty,
            )
        raise RankDeficiencyError("design matrix is rank deficient")


def monotone_gls(X: np.ndarray, y: np.ndarray, structure: ErrorStructure) -> np.ndarray:
    """Minimizer of (y - Xg)' Sigma^{-1} (y - Xg) over nonincreasing g.

    The error scale cancels, so only the correlation part of `structure`
    matters.  Raises RankDeficiencyError when the whitened design loses
    column rank, naming basis functions with no data support.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    Xw = np.column_stack([covariance.whiten(structure, X[:, j]) for j in range(X.shape[1])])
    yw = covariance.whiten(structure, y)
    _check_full_rank(Xw)
    return solve_monotone_ls(Xw, yw).gamma


def unique_design(X: np.ndarray, gamma_hat, tol: float | None = None):
    """Sum columns whose coefficients are tied; returns (X_u, p_u).

    Adjacent coefficients equal within ``1e-8 * (1 + |gamma_1|)`` count as
    tied (monotone solutions can only tie contiguous runs).
    """
    X = np.asarray(X, dtype=float)
    g = np.asarray(gamma_hat, dtype=float)
    if tol is None:
        tol = 1e-8 * (1.0 + abs(float(g[0])))
    starts = [0] + [i for i in range(1, g.size) if g[i - 1] - g[i] > tol]
    X_u = np.add.reduceat(X, starts, axis=1)
    return X_u, len(starts)


def _tie_group_starts(gamma: np.ndarray, tol: float | None = None) -> list[int]:
    g = np.asarray(gamma, dtype=float)
    if tol is None:
        tol = 1e-8 * (1.0 + abs(float(g[0])))
    return [0] + [i for i in range(1, g.size) if g[i - 1] - g[i] > tol]


# ---------------------------------------------------------------------------
# Approximate REML for (sigma, rho)
# ---------------------------------------------------------------------------


def reml_sigma(residual, structure: ErrorStructure, p_u: int) -> float:
    """Closed-form scale: sqrt(r' R^{-1} r / (n - p_u)); sigma in `structure`
    is ignored (only rho and the block sizes matter)."""
    r = np.asarray(residual, dtype=float)
    n = r.size
    if n <= p_u:
        raise ValidationError(f"need n > p_u, got n={n}, p_u={p_u}")
    quad = float(r @ covariance.inverse_apply(structure, r))
    return math.sqrt(max(quad, 0.0) / (n - p_u))


def _rho_search_bounds(block_sizes) -> tuple[float, float]:
    lo = max(0.0, rho_lower_bound(block_sizes)) + 1e-6
    return lo, 1.0 - 1e-6


def reml_rho(
    y,
    X,
    gamma_hat,
    X_u,
    block_sizes,
    bounds: tuple[float, float] | None = None,
    tol: float = 1e-6,
) -> float:
    """Maximize the restricted likelihood over the within-cell correlation.

    The scale is re-evaluated in closed form at every candidate rho.  Data
    with no replicated cell pins rho at 0 with a warning.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    X_u = np.asarray(X_u, dtype=float)
    g = np.asarray(gamma_hat, dtype=float)
    sizes = tuple(int(s) for s in block_sizes)
    if max(sizes) < 2:
        warnings.warn("all cells are singletons: rho is not identifiable, fixing 0")
        return 0.0
    if bounds is None:
        bounds = _rho_search_bounds(sizes)
    n = y.size
    p_u = X_u.shape[1]
    r = y - X @ g

    def objective(rho: float) -> float:
        st = ErrorStructure(sigma=1.0, rho=rho, block_sizes=sizes)
        quad = float(r @ covariance.inverse_apply(st, r))
        sigma2 = max(quad / (n - p_u), 1e-300)
        XtRinvX = X_u.T @ np.column_stack(
            [covariance.inverse_apply(st, X_u[:, j]) for j in range(p_u)]
        )
        sign, logdet_m = np.linalg.slogdet(XtRinvX)
        if sign <= 0:
            return -np.inf
        return (
            -(n - p_u) * math.log(sigma2)
            - covariance.corr_logdet(st)
            - logdet_m
        )

    return _maximize_scalar(objective, bounds, coarse=21, xatol=tol)


def _maximize_scalar(f, bounds: tuple[float, float], coarse: int, xatol: float) -> float:
    lo, hi = bounds
    grid = np.linspace(lo, hi, coarse)
    vals = np.array([f(x) for x in grid])
    i = int(np.argmax(vals))
    a = grid[max(0, i - 1)]
    b = grid[min(coarse - 1, i + 1)]
    res = minimize_scalar(
        lambda x: -f(x), bounds=(a, b), method="bounded", options={"xatol": xatol}
    )
    best = float(res.x)
    if f(best) < vals[i]:
        best = float(grid[i])
    return best


# ---------------------------------------------------------------------------
# Cell-collapsed fitting core (hot path shared by the profile and the studies)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _CellStats:
    """Sufficient statistics of the responses at the cell level."""

    ybar: np.ndarray      # (C,) cell means
    sizes: np.ndarray     # (C,) replicate counts
    ssw_cell: np.ndarray  # (C,) within-cell sums of squares
    ssw: float
    n: int
    size_values: np.ndarray
    size_counts: np.ndarray

    @property
    def has_replicates(self) -> bool:
        return bool(self.size_values.max(initial=0) > 1)


def _cell_stats(data: AddtDataset, y: np.ndarray | None = None) -> _CellStats:
    yy = data.y if y is None else np.asarray(y, dtype=float)
    sizes = data.cell_size.astype(float)
    sums = np.add.reduceat(yy, data.cell_start)
    ybar = sums / sizes
    centered = yy - np.repeat(ybar, data.cell_size)
    ssw_cell = np.add.reduceat(centered * centered, data.cell_start)
    vals, counts = np.unique(data.cell_size, return_counts=True)
    return _CellStats(
        ybar=ybar,
        sizes=sizes,
        ssw_cell=ssw_cell,
        ssw=float(ssw_cell.sum()),
        n=int(yy.size),
        size_values=vals.astype(float),
        size_counts=counts.astype(float),
    )


def _corr_logdet_grouped(stats: _CellStats, rho: float) -> float:
    sv = stats.size_values
    return float(
        stats.size_counts
        @ ((sv - 1.0) * math.log1p(-rho) + np.log1p((sv - 1.0) * rho))
    )


def _quad_form(stats: _CellStats, m2: np.ndarray, rho: float) -> float:
    w = stats.sizes / (1.0 + (stats.sizes - 1.0) * rho)
    return stats.ssw / (1.0 - rho) + float(w @ m2)


def _reml_objective_cells(
    rho: float, stats: _CellStats, m2: np.ndarray, Xcu: np.ndarray, p_u: int
) -> float:
    w = stats.sizes / (1.0 + (stats.sizes - 1.0) * rho)
    quad = stats.ssw / (1.0 - rho) + float(w @ m2)
    sigma2 = max(quad / (stats.n - p_u), 1e-300)
    sign, logdet_m = np.linalg.slogdet(Xcu.T @ (w[:, None] * Xcu))
    if sign <= 0:
        return -np.inf
    return -(stats.n - p_u) * math.log(sigma2) - _corr_logdet_grouped(stats, rho) - logdet_m


def _reml_rho_cells(
    stats: _CellStats,
    m2: np.ndarray,
    Xcu: np.ndarray,
    p_u: int,
    bounds: tuple[float, float],
    coarse: int,
    xatol: float,
) -> float:
    """Coarse vectorized sweep over rho followed by bounded Brent refinement."""
    lo, hi = bounds
    grid = np.linspace(lo, hi, coarse)
    W = stats.sizes / (1.0 + np.outer(grid, stats.sizes - 1.0))  # (K, C)
    quad = stats.ssw / (1.0 - grid) + W @ m2
    sigma2 = np.maximum(quad / (stats.n - p_u), 1e-300)
    sv, counts = stats.size_values, stats.size_counts
    logdet_r = (
        np.log1p(-grid)[:, None] * (sv - 1.0) + np.log1p(np.outer(grid, sv - 1.0))
    ) @ counts
    M = np.einsum("cp,kc,cq->kpq", Xcu, W, Xcu)
    signs, logdet_m = np.linalg.slogdet(M)
    vals = np.where(
        signs > 0,
        -(stats.n - p_u) * np.log(sigma2) - logdet_r - logdet_m,
        -np.inf,
    )
    i = int(np.argmax(vals))
    a = grid[max(0, i - 1)]
    b = grid[min(coarse - 1, i + 1)]
    res = minimize_scalar(
        lambda r: -_reml_objective_cells(r, stats, m2, Xcu, p_u),
        bounds=(a, b),
        method="bounded",
        options={"xatol": xatol},
    )
    best = float(res.x)
    if -res.fun < vals[i]:
        best = float(grid[i])
    return best


def _loglik_cells(stats: _CellStats, m2: np.ndarray, sigma: float, rho: float) -> float:
    sigma_eff = max(sigma, _SIGMA_FLOOR)
    quad = _quad_form(stats, m2, rho)
    return (
        -0.5 * stats.n * _LOG_2PI
        - stats.n * math.log(sigma_eff)
        - 0.5 * _corr_logdet_grouped(stats, rho)
        - 0.5 * quad / (sigma_eff * sigma_eff)
    )


@dataclass
class BetaFitResult:
    """Estimates at one fixed acceleration slope."""

    gamma: np.ndarray
    sigma: float
    rho: float
    loglik: float
    p_u: int
    group_starts: tuple[int, ...]
    converged: bool
    iterations: int
    degenerate_sigma: bool
    rho_identifiable: bool
    loglik_trace: tuple[float, ...] = ()


def _ols_init(Xc: np.ndarray, stats: _CellStats, rho_bounds) -> tuple[float, float]:
    sw = np.sqrt(stats.sizes)
    gamma0 = np.linalg.lstsq(sw[:, None] * Xc, sw * stats.ybar, rcond=None)[0]
    rbar = stats.ybar - Xc @ gamma0
    ss_full = stats.ssw + float(stats.sizes @ (rbar * rbar))
    sigma0 = math.sqrt(max(ss_full, 0.0) / stats.n)
    rho0 = 0.0
    if stats.has_replicates and sigma0 > 0.0:
        cross = (stats.sizes * rbar) ** 2 - (stats.ssw_cell + stats.sizes * rbar * rbar)
        pairs = float(stats.sizes @ (stats.sizes - 1.0))
        rho0 = float(cross.sum()) / (pairs * sigma0 * sigma0)
        rho0 = min(max(rho0, rho_bounds[0]), rho_bounds[1])
    return sigma0, rho0


def _fit_cells(
    Xc: np.ndarray,
    stats: _CellStats,
    controls: FitControls,
    warm_starts: tuple[int, ...] | None = None,
) -> BetaFitResult:
    _check_full_rank(Xc)
    p = Xc.shape[1]
    if stats.n <= p:
        raise ValidationError(f"need n > p, got n={stats.n}, p={p}")
    rho_bounds = _rho_search_bounds(stats.sizes.astype(int))
    identifiable = stats.has_replicates
    sigma, rho = _ols_init(Xc, stats, rho_bounds)
    if not identifiable:
        rho = 0.0
    scale2 = 1.0 + float(stats.ybar @ stats.ybar)

    gamma = None
    starts = warm_starts
    trace: list[float] = []
    converged = False
    degenerate = False
    it = 0
    for it in range(1, controls.max_iter + 1):
        w = stats.sizes / (1.0 + (stats.sizes - 1.0) * rho)
        sw = np.sqrt(w)
        qp = solve_monotone_ls(sw[:, None] * Xc, sw * stats.ybar, warm_starts=starts)
        gamma_new = qp.gamma
        starts = qp.group_starts
        p_u = len(starts)
        if stats.n <= p_u:
            raise ValidationError(f"need n > p_u, got n={stats.n}, p_u={p_u}")
        m = stats.ybar - Xc @ gamma_new
        m2 = m * m
        quad_now = _quad_form(stats, m2, rho)
        degenerate = quad_now < 1e-24 * scale2
        gamma_unchanged = gamma is not None and bool(
            np.abs(gamma_new - gamma).max() < controls.param_tol
        )
        if identifiable and not degenerate and not gamma_unchanged:
            Xcu = np.add.reduceat(Xc, list(starts), axis=1)
            rho_new = _reml_rho_cells(
                stats, m2, Xcu, p_u, rho_bounds,
                coarse=controls.rho_coarse, xatol=controls.rho_tol,
            )
        else:
            # Identical coefficients give an identical restricted likelihood,
            # so the previous maximizer is reused.
            rho_new = rho if identifiable else 0.0
        sigma_new = math.sqrt(max(_quad_form(stats, m2, rho_new), 0.0) / (stats.n - p_u))
        delta = abs(sigma_new - sigma) + abs(rho_new - rho)
        if gamma is not None:
            delta = max(delta, float(np.abs(gamma_new - gamma).max()))
        else:
            delta = np.inf
        gamma, sigma, rho = gamma_new, sigma_new, rho_new
        if controls.track_loglik:
            trace.append(_loglik_cells(stats, m2, sigma, rho))
        if delta < controls.param_tol:
            converged = True
            break

    m = stats.ybar - Xc @ gamma
    loglik = _loglik_cells(stats, m * m, sigma, rho)
    return BetaFitResult(
        gamma=gamma,
        sigma=sigma,
        rho=rho,
        loglik=loglik,
        p_u=len(starts),
        group_starts=tuple(starts),
        converged=converged,
        iterations=it,
        degenerate_sigma=degenerate or sigma < _SIGMA_FLOOR,
        rho_identifiable=identifiable,
        loglik_trace=tuple(trace),
    )


def fit_given_beta(
    data: AddtDataset,
    stresses: StressSet,
    spec: SplineSpec,
    beta: float,
    controls: FitControls | None = None,
) -> BetaFitResult:
    """Alternate the monotone GLS and REML steps at a fixed slope until the
    parameter vector stabilizes; returns the profile log-likelihood."""
    controls = controls or FitControls()
    Xc = cell_design(data, stresses, spec, beta)
    return _fit_cells(Xc, _cell_stats(data), controls)


# ---------------------------------------------------------------------------
# Profile likelihood over beta
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelFit:
    """Fitted semi-parametric degradation model."""

    gamma: tuple[float, ...]
    beta: float
    sigma: float
    rho: float
    spec: SplineSpec
    knots: QuantileKnots | FixedKnots
    p_u: int
    loglik: float
    edf: int
    aic: float
    beta_trace: tuple[tuple[float, float], ...]
    converged: bool
    iterations: int
    beta_at_boundary: bool
    degenerate_sigma: bool
    rho_identifiable: bool
    x_max: float
    kelvin_offset: float
    y_floor: float
    time_unit: str
    n_obs: int

    def to_json(self) -> dict:
        return {
            "gamma": list(self.gamma),
            "beta": self.beta,
            "sigma": self.sigma,
            "rho": self.rho,
            "spec": self.spec.to_json(),
            "knots": self.knots.to_json(),
            "p_u": self.p_u,
            "loglik": self.loglik,
            "edf": self.edf,
            "aic": self.aic,
            "beta_trace": [[b, ll] for b, ll in self.beta_trace],
            "converged": self.converged,
            "iterations": self.iterations,
            "beta_at_boundary": self.beta_at_boundary,
            "degenerate_sigma": self.degenerate_sigma,
            "rho_identifiable": self.rho_identifiable,
            "x_max": self.x_max,
            "kelvin_offset": self.kelvin_offset,
            "y_floor": self.y_floor,
            "time_unit": self.time_unit,
            "n_obs": self.n_obs,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ModelFit":
        return cls(
            gamma=tuple(float(v) for v in obj["gamma"]),
            beta=float(obj["beta"]),
            sigma=float(obj["sigma"]),
            rho=float(obj["rho"]),
            spec=SplineSpec.from_json(obj["spec"]),
            knots=knot_strategy_from_json(obj["knots"]),
            p_u=int(obj["p_u"]),
            loglik=float(obj["loglik"]),
            edf=int(obj["edf"]),
            aic=float(obj["aic"]),
            beta_trace=tuple((float(b), float(ll)) for b, ll in obj["beta_trace"]),
            converged=bool(obj["converged"]),
            iterations=int(obj["iterations"]),
            beta_at_boundary=bool(obj["beta_at_boundary"]),
            degenerate_sigma=bool(obj["degenerate_sigma"]),
            rho_identifiable=bool(obj["rho_identifiable"]),
            x_max=float(obj["x_max"]),
            kelvin_offset=float(obj["kelvin_offset"]),
            y_floor=float(obj["y_floor"]),
            time_unit=str(obj["time_unit"]),
            n_obs=int(obj["n_obs"]),
        )


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def profile_fit(
    data: AddtDataset,
    stresses: StressSet,
    knots: QuantileKnots | FixedKnots | SplineSpec,
    controls: FitControls | None = None,
    y_override: np.ndarray | None = None,
) -> ModelFit:
    """Maximize the profile log-likelihood over the acceleration slope.

    Coarse grid over the slope range, then golden-section refinement around
    the best point.  Quantile knot strategies rebuild their locations at
    every candidate slope; a fixed spec is used verbatim and slopes that
    push warped times outside it are rejected.

    ``y_override`` substitutes the response vector (same cells) and exists
    for the bootstrap.
    """
    controls = controls or FitControls()
    if isinstance(knots, SplineSpec):
        knots = FixedKnots(knots)
    stats = _cell_stats(data, y_override)
    y = data.y if y_override is None else np.asarray(y_override, dtype=float)

    cache: dict[float, tuple[float, BetaFitResult | None, SplineSpec | None]] = {}
    warm: dict[str, tuple[int, ...] | None] = {"starts": None}

    def evaluate(beta: float) -> float:
        if beta in cache:
            return cache[beta][0]
        try:
            spec = knots.build(data, stresses, beta)
            Xc = cell_design(data, stresses, spec, beta)
            res = _fit_cells(Xc, stats, controls, warm_starts=warm["starts"])
        except (InfeasibleBetaError, RankDeficiencyError, ValidationError):
            cache[beta] = (-np.inf, None, None)
            return -np.inf
        warm["starts"] = res.group_starts
        cache[beta] = (res.loglik, res, spec)
        return res.loglik

    lo, hi = controls.beta_range
    grid = np.linspace(lo, hi, controls.grid_points)
    values = np.array([evaluate(b) for b in grid])
    if not np.any(np.isfinite(values)):
        raise NumericalError(
            f"no feasible slope in [{lo}, {hi}] for the supplied knots"
        )
    i_best = int(np.argmax(values))
    boundary = i_best in (0, controls.grid_points - 1)
    a = float(grid[max(0, i_best - 1)])
    b = float(grid[min(controls.grid_points - 1, i_best + 1)])

    # Golden-section refinement (maximization) on the bracket.
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = evaluate(c), evaluate(d)
    while b - a > controls.beta_tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = evaluate(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = evaluate(d)

    feasible = {bb: v for bb, v in cache.items() if np.isfinite(v[0])}
    beta_hat = max(feasible, key=lambda bb: feasible[bb][0])
    _, res, spec = feasible[beta_hat]
    trace = tuple(sorted((bb, v[0]) for bb, v in feasible.items()))
    edf = res.p_u + 3
    return ModelFit(
        gamma=tuple(float(g) for g in res.gamma),
        beta=float(beta_hat),
        sigma=res.sigma,
        rho=res.rho,
        spec=spec,
        knots=knots,
        p_u=res.p_u,
        loglik=res.loglik,
        edf=edf,
        aic=-2.0 * res.loglik + 2.0 * edf,
        beta_trace=trace,
        converged=res.converged,
        iterations=res.iterations,
        beta_at_boundary=boundary,
        degenerate_sigma=res.degenerate_sigma,
        rho_identifiable=res.rho_identifiable,
        x_max=stresses.x_max,
        kelvin_offset=stresses.kelvin_offset,
        y_floor=float(y.min()),
        time_unit=data.time_unit,
        n_obs=int(y.size),
    )
