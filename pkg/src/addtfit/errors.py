"""Exception types shared across the package."""

from __future__ import annotations


class AddtError(Exception):
    """Base class for all addtfit errors."""


class CsvParseError(AddtError):
    """Malformed CSV input; carries the 1-based physical line number."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class ValidationError(AddtError):
    """Input data or configuration violates a documented precondition."""


class ExtrapolationError(AddtError):
    """Evaluation requested outside the supported time/degradation range."""


class InfeasibleBetaError(AddtError):
    """A candidate acceleration slope pushes warped times outside the knots."""

    def __init__(self, beta: float, message: str = ""):
        super().__init__(message or f"beta={beta} makes the design infeasible")
        self.beta = beta


class RankDeficiencyError(AddtError):
    """Design matrix loses column rank; carries unsupported basis indices."""

    def __init__(self, message: str, empty_columns: tuple[int, ...] = ()):
        super().__init__(message)
        self.empty_columns = empty_columns


class NumericalError(AddtError):
    """An internal solver failed to produce a usable result."""
