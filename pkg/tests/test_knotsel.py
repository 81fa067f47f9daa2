import dataclasses

import numpy as np
import pytest

from addtfit.bspline import QuantileKnots
from addtfit.dataset import stress_set
from addtfit.fit import FitControls, profile_fit
from addtfit.knotsel import aic_of_fit, backward_delete, select_knot_count, select_spec
from addtfit.simulation import SimulationScenario, SplineTruth, generate_spline_data

CONTROLS = FitControls(beta_range=(0.0, 2.0))


def _data(seed=31, temps=(50, 65, 80), times=(8, 25, 75, 130, 170), sigma=0.019):
    scen = SimulationScenario(
        study="recovery",
        temps_c=temps,
        times=times,
        reps_per_cell=10,
        truth=SplineTruth(
            degree=2, n_interior=3,
            gamma=(1.0, 0.9, 0.8, 0.7, 0.6, 0.6),
            beta=0.83, sigma=sigma, rho=0.2,
        ),
        n_datasets=1,
        seed=seed,
        beta_range=(0.0, 2.0),
    )
    data = generate_spline_data(scen, np.random.default_rng([seed, 0]))
    return data, stress_set(data, scen.kelvin_offset)


@pytest.fixture(scope="module")
def fitted():
    data, stresses = _data()
    fit = profile_fit(data, stresses, QuantileKnots.default(2, 2), CONTROLS)
    return data, stresses, fit


def test_aic_formula_example(fitted):
    _, _, fit = fitted
    synthetic = dataclasses.replace(fit, loglik=38.7264, p_u=2)  # edf = 2 + 3 = 5
    assert aic_of_fit(synthetic) == pytest.approx(-67.4528, abs=1e-10)


def test_aic_edf_difference_of_two(fitted):
    _, _, fit = fitted
    f5 = dataclasses.replace(fit, loglik=10.0, p_u=2)
    f6 = dataclasses.replace(fit, loglik=10.0, p_u=3)
    assert aic_of_fit(f6) - aic_of_fit(f5) == pytest.approx(2.0, abs=1e-12)


def test_aic_unconstrained_edf(fitted):
    _, _, fit = fitted
    assert aic_of_fit(fit) == -2.0 * fit.loglik + 2.0 * (fit.p_u + 3)
    if fit.p_u == fit.spec.p:
        assert fit.edf == fit.spec.p + 3


def test_select_knot_count_reports_candidates():
    data, stresses = _data()
    strategy, fit, candidates = select_knot_count(
        data, stresses, degree=2, n_max=3, controls=CONTROLS
    )
    assert 1 <= len(strategy.levels) <= 3
    assert len(candidates) >= 1
    best = min(c.aic for c in candidates)
    assert fit.aic == best


def test_backward_delete_trace_strictly_decreasing():
    data, stresses = _data(seed=47)
    start = QuantileKnots.default(2, 3)
    knots, fit, deletions, _ = backward_delete(
        data, stresses, start, controls=CONTROLS
    )
    for d in deletions:
        assert d.aic_after < d.aic_before
    assert len(knots.levels) == 3 - len(deletions)


def test_backward_delete_removes_duplicated_knot():
    data, stresses = _data(seed=53)
    redundant = QuantileKnots(degree=2, levels=(0.25, 0.5, 0.5, 0.75))
    knots, fit, deletions, _ = backward_delete(
        data, stresses, redundant, controls=CONTROLS
    )
    assert len(deletions) >= 1
    assert deletions[0].removed_level in (0.25, 0.5, 0.75)
    assert knots.levels.count(0.5) <= 1


def test_backward_delete_stops_without_improvement():
    data, stresses = _data(seed=59)
    start = QuantileKnots.default(2, 1)
    fit0 = profile_fit(data, stresses, start, CONTROLS)
    knots, fit, deletions, _ = backward_delete(
        data, stresses, start, controls=CONTROLS, fit=fit0
    )
    if not deletions:
        assert knots == start
        assert fit.aic == fit0.aic


def test_select_spec_winner_is_minimal():
    data, stresses = _data(seed=67)
    report = select_spec(data, stresses, degrees=(1, 2), n_max=2, controls=CONTROLS)
    aics = [c.aic for c in report.candidates]
    assert report.winner_fit.aic <= min(aics) + 1e-12
    assert len(report.candidates) >= 2  # at least one per degree
    obj = report.to_json()
    assert obj["winner_spec"] == report.winner.to_json()
    assert "candidates" in obj and len(obj["candidates"]) == len(report.candidates)
    assert isinstance(report.aic_table(), str)


def test_selection_deterministic():
    data, stresses = _data(seed=71)
    r1 = select_spec(data, stresses, degrees=(2,), n_max=2, controls=CONTROLS)
    r2 = select_spec(data, stresses, degrees=(2,), n_max=2, controls=CONTROLS)
    assert r1.winner_fit.aic == r2.winner_fit.aic
    assert r1.winner_strategy == r2.winner_strategy


@pytest.mark.slow
def test_knot_count_recovery_on_large_design():
    counts = []
    for rep in range(3):
        data, stresses = _data(
            seed=500 + rep,
            temps=(30, 40, 50, 60, 70, 80),
            times=(10, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120, 130, 140, 150, 170),
        )
        _, _, candidates = select_knot_count(
            data, stresses, degree=2, n_max=5, controls=CONTROLS
        )
        best = min(candidates, key=lambda c: c.aic)
        counts.append(len(best.levels))
    assert np.median(counts) <= 5
    assert min(counts) >= 1
