"""Block compound-symmetric error covariance in closed form.

Every reading cell of size n contributes one correlation block
R = (1 - rho) * I_n + rho * J_n.  All inverses, determinants and square
roots used by the estimators come from the rank-one structure of J, so
no dense n x n matrix is ever materialized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = [
    "ErrorStructure",
    "rho_lower_bound",
    "block_inverse_apply",
    "block_logdet",
    "whiten",
    "corr_logdet",
    "inverse_apply",
]


def rho_lower_bound(block_sizes) -> float:
    """Largest lower bound on rho keeping every block positive definite."""
    nmax = int(max(block_sizes))
    return -1.0 / (nmax - 1) if nmax > 1 else -1.0


def _check_rho(n: int, rho: float) -> None:
    if rho >= 1.0:
        raise ValidationError(f"rho={rho} must be < 1")
    if n > 1 and 1.0 + (n - 1) * rho <= 0.0:
        raise ValidationError(f"rho={rho} singular for block size {n}")


@dataclass(frozen=True)
class ErrorStructure:
    """Scale sigma, within-cell correlation rho, and the cell sizes in data order."""

    sigma: float
    rho: float
    block_sizes: tuple[int, ...]

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValidationError(f"sigma must be > 0, got {self.sigma}")
        if not self.block_sizes or any(n < 1 for n in self.block_sizes):
            raise ValidationError("block sizes must be positive integers")
        if self.rho <= rho_lower_bound(self.block_sizes) or self.rho >= 1.0:
            raise ValidationError(
                f"rho={self.rho} outside the positive-definite range for "
                f"block sizes {set(self.block_sizes)}"
            )

    @property
    def n(self) -> int:
        return int(sum(self.block_sizes))


def block_inverse_apply(n: int, rho: float, v: np.ndarray) -> np.ndarray:
    """Apply the inverse of one correlation block to a vector.

    R^{-1} v = (1/(1-rho)) * [v - rho/(1+(n-1)rho) * sum(v) * 1].
    """
    _check_rho(n, rho)
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise ValidationError(f"vector length {v.shape} does not match block size {n}")
    if n == 1:
        return v.copy()
    shrink = rho / (1.0 + (n - 1) * rho)
    return (v - shrink * v.sum()) / (1.0 - rho)


def block_logdet(n: int, rho: float) -> float:
    """log det of one correlation block: (n-1)log(1-rho) + log(1+(n-1)rho)."""
    _check_rho(n, rho)
    if n == 1:
        return 0.0
    return (n - 1) * np.log1p(-rho) + np.log1p((n - 1) * rho)


def _block_whiten(n: int, rho: float, v: np.ndarray) -> np.ndarray:
    # Symmetric inverse square root: R^{-1/2} = a (I - P) + b P with
    # P = J/n, a = (1-rho)^{-1/2}, b = (1+(n-1)rho)^{-1/2}.
    if n == 1:
        return v.copy()
    mean = v.mean()
    a = 1.0 / np.sqrt(1.0 - rho)
    b = 1.0 / np.sqrt(1.0 + (n - 1) * rho)
    return a * (v - mean) + b * mean


def whiten(structure: ErrorStructure, v: np.ndarray) -> np.ndarray:
    """Map v to L^{-1} v with L L' = R, blockwise, so that
    ||whiten(v)||^2 equals v' R^{-1} v.

    Uses the symmetric square root of each block; sigma is not applied
    (whitening is on the correlation scale).
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (structure.n,):
        raise ValidationError(
            f"vector length {v.shape} does not match total size {structure.n}"
        )
    out = np.empty_like(v)
    start = 0
    for n in structure.block_sizes:
        _check_rho(n, structure.rho)
        out[start : start + n] = _block_whiten(n, structure.rho, v[start : start + n])
        start += n
    return out


def inverse_apply(structure: ErrorStructure, v: np.ndarray) -> np.ndarray:
    """Apply R^{-1} blockwise to a full-length vector."""
    v = np.asarray(v, dtype=float)
    if v.shape != (structure.n,):
        raise ValidationError(
            f"vector length {v.shape} does not match total size {structure.n}"
        )
    out = np.empty_like(v)
    start = 0
    for n in structure.block_sizes:
        out[start : start + n] = block_inverse_apply(
            n, structure.rho, v[start : start + n]
        )
        start += n
    return out


def corr_logdet(structure: ErrorStructure) -> float:
    """log det of the full block-diagonal correlation matrix R."""
    return float(sum(block_logdet(n, structure.rho) for n in structure.block_sizes))
