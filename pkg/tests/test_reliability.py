import io

import numpy as np
import pytest

from addtfit.bspline import FixedKnots, QuantileKnots, SplineSpec
from addtfit.dataset import arrhenius_x, load_addt_csv, stress_set
from addtfit.errors import ExtrapolationError, ValidationError
from addtfit.fit import FitControls, ModelFit, profile_fit
from addtfit.reliability import (
    baseline_initial_level,
    extrapolation_floor,
    mttf,
    predict_path,
)
from addtfit.simulation import SimulationScenario, SplineTruth, generate_spline_data


def linear_fit(beta=0.0, x_max=None, kelvin_offset=273.16, y_floor=0.0):
    """Hand-made fit whose baseline is g(t) = 1 - t/100 on [0, 100]."""
    spec = SplineSpec(degree=1, interior=(), boundary=(0.0, 100.0))
    if x_max is None:
        x_max = arrhenius_x(80.0, kelvin_offset)
    return ModelFit(
        gamma=(1.0, 0.0),
        beta=beta,
        sigma=0.01,
        rho=0.0,
        spec=spec,
        knots=FixedKnots(spec),
        p_u=2,
        loglik=0.0,
        edf=5,
        aic=10.0,
        beta_trace=((beta, 0.0),),
        converged=True,
        iterations=1,
        beta_at_boundary=False,
        degenerate_sigma=False,
        rho_identifiable=True,
        x_max=x_max,
        kelvin_offset=kelvin_offset,
        y_floor=y_floor,
        time_unit="hours",
        n_obs=30,
    )


def test_extrapolation_floor_examples():
    rows = "temperature,time,response\n50,1,4.4\n50,2,3.1\n60,1,5.0\n"
    data = load_addt_csv(io.StringIO(rows))
    assert extrapolation_floor(data) == 3.1
    single = "temperature,time,response\n50,1,4.4\n50,2,4.4\n"
    assert extrapolation_floor(load_addt_csv(io.StringIO(single))) == 4.4


def test_mttf_linear_baseline():
    fit = linear_fit(beta=0.0)
    assert mttf(fit, 80.0, 0.7) == pytest.approx(30.0, rel=1e-9)


def test_mttf_time_scale_doubles():
    # choose beta and use temperature so exp(beta * s_use) = 2
    kelvin_offset = 273.16
    x_max = arrhenius_x(80.0, kelvin_offset)
    x_use = arrhenius_x(30.0, kelvin_offset)
    beta = np.log(2.0) / (x_max - x_use)
    fit = linear_fit(beta=beta)
    assert mttf(fit, 30.0, 0.7) == pytest.approx(60.0, rel=1e-9)


def test_mttf_hottest_equals_baseline_crossing():
    fit = linear_fit(beta=1.4)
    assert mttf(fit, 80.0, 0.5) == pytest.approx(50.0, rel=1e-9)


def test_mttf_nondecreasing_as_temperature_drops():
    fit = linear_fit(beta=0.9)
    vals = [mttf(fit, t, 0.6) for t in (80.0, 60.0, 40.0, 20.0)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_mttf_flat_segment_earliest_crossing():
    # piecewise path: drops to 0.5 at t=50 then stays flat until 100
    spec = SplineSpec(degree=1, interior=(50.0,), boundary=(0.0, 100.0))
    fit = linear_fit()
    object.__setattr__(fit, "spec", spec)
    object.__setattr__(fit, "gamma", (1.0, 0.5, 0.5))
    assert mttf(fit, 80.0, 0.5) == pytest.approx(50.0, rel=1e-6)


def test_mttf_refusals():
    fit = linear_fit(y_floor=0.4)
    with pytest.raises(ExtrapolationError, match="below the lowest"):
        mttf(fit, 80.0, 0.2)  # below the observed floor
    with pytest.raises(ValidationError, match="initial level"):
        mttf(fit, 80.0, 1.2)
    # threshold above the boundary value but below the floor is impossible here;
    # craft a path that never reaches 0.45 inside the knots instead
    spec = SplineSpec(degree=1, interior=(), boundary=(0.0, 50.0))
    short = linear_fit(y_floor=0.0)
    object.__setattr__(short, "spec", spec)
    object.__setattr__(short, "gamma", (1.0, 0.5))
    with pytest.raises(ExtrapolationError, match="never reaches"):
        mttf(short, 80.0, 0.45)


def test_relative_threshold_resolved_against_initial_level():
    fit = linear_fit(beta=0.0)
    assert baseline_initial_level(fit) == pytest.approx(1.0, rel=1e-12)
    assert mttf(fit, 80.0, 0.7, relative=True) == pytest.approx(30.0, rel=1e-9)


def test_predict_path_refusal_names_admissible_range():
    fit = linear_fit(beta=0.0)
    with pytest.raises(ExtrapolationError, match=r"admissible times"):
        predict_path(fit, 80.0, [150.0])


def test_predict_path_monotone_and_consistent():
    scen = SimulationScenario(
        study="recovery",
        temps_c=(50, 65, 80),
        times=(8, 25, 75, 130, 170),
        reps_per_cell=10,
        truth=SplineTruth(
            degree=2, n_interior=3,
            gamma=(1.0, 0.9, 0.8, 0.7, 0.6, 0.6),
            beta=0.83, sigma=0.019, rho=0.2,
        ),
        n_datasets=1,
        seed=61,
        beta_range=(0.0, 2.0),
    )
    data = generate_spline_data(scen, np.random.default_rng([61, 0]))
    stresses = stress_set(data, scen.kelvin_offset)
    fit = profile_fit(
        data, stresses, QuantileKnots.default(2, 3),
        FitControls(beta_range=(0.0, 2.0)),
    )
    lo, hi = fit.spec.boundary
    times = np.linspace(lo if lo > 0 else 0.0, hi, 40)
    times = times[times >= lo]
    path = predict_path(fit, 80.0, times)
    assert np.all(np.diff(path) <= 1e-12)

    # hottest level equals the baseline
    base = predict_path(fit, 80.0, [100.0])[0]
    import addtfit.bspline as bsp

    assert base == pytest.approx(
        float(bsp.path_value(fit.spec, fit.gamma, 100.0)[0]), rel=1e-12
    )

    # a cooler temperature reaches any level later
    d_f = 0.8
    t_hot = mttf(fit, 80.0, d_f)
    t_cold = mttf(fit, 50.0, d_f)
    assert t_cold >= t_hot

    # crossing consistency
    val = predict_path(fit, 50.0, [t_cold])[0]
    assert val == pytest.approx(d_f, abs=1e-8)
