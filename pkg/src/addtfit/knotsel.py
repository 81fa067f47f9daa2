"""AIC-driven selection of spline degree, knot count, and knot deletion.

Candidate knot sets are quantile levels of the pooled warped times, so a
candidate's knot locations travel with the slope being profiled.  Deleting
a knot removes its quantile level; the surviving levels are re-materialized
at every candidate slope exactly like the defaults.
"""

from __future__ import annotations

from dataclasses import dataclass

from .bspline import QuantileKnots
from .dataset import AddtDataset, StressSet
from .errors import NumericalError, RankDeficiencyError, ValidationError
from .fit import FitControls, ModelFit, profile_fit

__all__ = [
    "KnotCandidate",
    "KnotDeletion",
    "KnotSearchReport",
    "aic_of_fit",
    "select_knot_count",
    "backward_delete",
    "select_spec",
]


def aic_of_fit(fit: ModelFit) -> float:
    """-2 loglik + 2 (p_u + 3); the 3 covers the slope and both error parameters."""
    return -2.0 * fit.loglik + 2.0 * (fit.p_u + 3)


@dataclass(frozen=True)
class KnotCandidate:
    """One evaluated (degree, quantile levels) candidate."""

    stage: str  # "knot-count", "deletion", or "final"
    degree: int
    levels: tuple[float, ...]
    interior: tuple[float, ...]
    beta: float
    loglik: float
    edf: int
    aic: float

    def to_json(self) -> dict:
        return {
            "stage": self.stage,
            "degree": self.degree,
            "levels": list(self.levels),
            "interior_knots": list(self.interior),
            "beta": self.beta,
            "loglik": self.loglik,
            "edf": self.edf,
            "aic": self.aic,
        }


@dataclass(frozen=True)
class KnotDeletion:
    degree: int
    removed_level: float
    aic_before: float
    aic_after: float

    def to_json(self) -> dict:
        return {
            "degree": self.degree,
            "removed_level": self.removed_level,
            "aic_before": self.aic_before,
            "aic_after": self.aic_after,
        }


@dataclass(frozen=True)
class KnotSearchReport:
    candidates: tuple[KnotCandidate, ...]
    deletion_trace: tuple[KnotDeletion, ...]
    winner_strategy: QuantileKnots
    winner_fit: ModelFit

    @property
    def winner(self):
        return self.winner_fit.spec

    def to_json(self) -> dict:
        return {
            "candidates": [c.to_json() for c in self.candidates],
            "deletion_trace": [d.to_json() for d in self.deletion_trace],
            "winner_strategy": self.winner_strategy.to_json(),
            "winner_spec": self.winner.to_json(),
            "winner_fit": self.winner_fit.to_json(),
        }

    def aic_table(self) -> str:
        lines = ["stage       degree  levels                          edf  AIC"]
        for c in self.candidates:
            lv = ",".join(f"{v:.3g}" for v in c.levels) or "-"
            lines.append(
                f"{c.stage:<11} {c.degree:>6}  {lv:<30}  {c.edf:>3}  {c.aic:.4f}"
            )
        return "\n".join(lines)


def _candidate(stage: str, strategy: QuantileKnots, fit: ModelFit) -> KnotCandidate:
    return KnotCandidate(
        stage=stage,
        degree=strategy.degree,
        levels=strategy.levels,
        interior=fit.spec.interior,
        beta=fit.beta,
        loglik=fit.loglik,
        edf=fit.edf,
        aic=fit.aic,
    )


def _try_profile(data, stresses, strategy, controls):
    try:
        return profile_fit(data, stresses, strategy, controls)
    except (NumericalError, RankDeficiencyError, ValidationError):
        return None


def select_knot_count(
    data: AddtDataset,
    stresses: StressSet,
    degree: int,
    n_max: int = 5,
    controls: FitControls | None = None,
):
    """Profile every default knot count 1..n_max; returns
    (best_strategy, best_fit, candidates)."""
    controls = controls or FitControls()
    candidates: list[KnotCandidate] = []
    best: tuple[QuantileKnots, ModelFit] | None = None
    for n_knots in range(1, n_max + 1):
        strategy = QuantileKnots.default(degree, n_knots)
        fit = _try_profile(data, stresses, strategy, controls)
        if fit is None:
            continue
        candidates.append(_candidate("knot-count", strategy, fit))
        if best is None or fit.aic < best[1].aic:
            best = (strategy, fit)
    if best is None:
        raise NumericalError(
            f"no feasible knot count in 1..{n_max} for degree {degree}"
        )
    return best[0], best[1], candidates


def backward_delete(
    data: AddtDataset,
    stresses: StressSet,
    knots: QuantileKnots,
    controls: FitControls | None = None,
    fit: ModelFit | None = None,
):
    """Greedy knot deletion: drop the level whose removal lowers AIC the most,
    refitting the full slope profile each time; stop when nothing improves.

    Returns (strategy, fit, deletions, evaluated_candidates)."""
    controls = controls or FitControls()
    if fit is None:
        fit = profile_fit(data, stresses, knots, controls)
    deletions: list[KnotDeletion] = []
    evaluated: list[KnotCandidate] = []
    while knots.levels:
        best_i = -1
        best_fit = None
        for i in range(len(knots.levels)):
            trial = QuantileKnots(
                degree=knots.degree,
                levels=knots.levels[:i] + knots.levels[i + 1 :],
            )
            trial_fit = _try_profile(data, stresses, trial, controls)
            if trial_fit is None:
                continue
            evaluated.append(_candidate("deletion", trial, trial_fit))
            if trial_fit.aic < fit.aic and (
                best_fit is None or trial_fit.aic < best_fit.aic
            ):
                best_i = i
                best_fit = trial_fit
        if best_i < 0:
            break
        deletions.append(
            KnotDeletion(
                degree=knots.degree,
                removed_level=knots.levels[best_i],
                aic_before=fit.aic,
                aic_after=best_fit.aic,
            )
        )
        knots = QuantileKnots(
            degree=knots.degree,
            levels=knots.levels[:best_i] + knots.levels[best_i + 1 :],
        )
        fit = best_fit
    return knots, fit, deletions, evaluated


def select_spec(
    data: AddtDataset,
    stresses: StressSet,
    degrees=(1, 2, 3),
    n_max: int = 5,
    controls: FitControls | None = None,
) -> KnotSearchReport:
    """Two-step search per degree (count, then deletion); global AIC winner."""
    controls = controls or FitControls()
    all_candidates: list[KnotCandidate] = []
    all_deletions: list[KnotDeletion] = []
    winner: tuple[QuantileKnots, ModelFit] | None = None
    for degree in degrees:
        try:
            strategy, fit, candidates = select_knot_count(
                data, stresses, degree, n_max, controls
            )
        except NumericalError:
            continue
        all_candidates.extend(candidates)
        strategy, fit, deletions, evaluated = backward_delete(
            data, stresses, strategy, controls, fit=fit
        )
        all_candidates.extend(evaluated)
        all_deletions.extend(deletions)
        all_candidates.append(_candidate("final", strategy, fit))
        if winner is None or fit.aic < winner[1].aic:
            winner = (strategy, fit)
    if winner is None:
        raise NumericalError("knot selection found no feasible candidate")
    return KnotSearchReport(
        candidates=tuple(all_candidates),
        deletion_trace=tuple(all_deletions),
        winner_strategy=winner[0],
        winner_fit=winner[1],
    )
