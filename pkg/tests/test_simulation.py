import json

import numpy as np
import pytest

from addtfit.dataset import arrhenius_x
from addtfit.simulation import (
    MttfSpec,
    ParametricTruth,
    SimulationScenario,
    SplineTruth,
    draw_cs_noise,
    fit_parametric,
    generate_parametric_data,
    generate_spline_data,
    load_scenario,
    run_misspec_study,
    run_recovery_study,
)

RECOVERY = SimulationScenario(
    study="recovery",
    temps_c=(50, 65, 80),
    times=(8, 25, 75, 130, 170),
    reps_per_cell=10,
    truth=SplineTruth(
        degree=2, n_interior=3,
        gamma=(1.0, 0.9, 0.8, 0.7, 0.6, 0.6),
        beta=0.83, sigma=0.019, rho=0.2,
    ),
    n_datasets=4,
    seed=99,
    beta_range=(0.0, 2.0),
)


def _misspec(n_datasets=3, seed=99):
    return SimulationScenario(
        study="misspec",
        temps_c=(50, 65, 80),
        times=(192, 600, 1800, 3120, 4320),
        reps_per_cell=5,
        time_zero_count=10,
        truth=ParametricTruth(beta0=1.0, beta1=-3.5, beta2=0.3, sigma=0.02, rho=0.0),
        n_datasets=n_datasets,
        seed=seed,
        beta_range=(0.0, 2.0),
        grid_points=50,
        mttf=MttfSpec(temp_c=30.0, threshold=0.5002648536378371, report_divisor=168.0),
    )


class TestGenerators:
    def test_zero_sigma_lies_on_path(self):
        obj = RECOVERY.to_json()
        obj["truth"]["sigma"] = 0.0
        obj["truth"]["rho"] = 0.0
        scen = SimulationScenario.from_json(obj)
        d1 = generate_spline_data(scen, np.random.default_rng(1))
        d2 = generate_spline_data(scen, np.random.default_rng(2))
        assert np.array_equal(d1.y, d2.y)  # no noise, identical paths

    def test_rho_one_makes_cells_identical(self):
        obj = RECOVERY.to_json()
        obj["truth"]["rho"] = 1.0 - 1e-12
        scen = SimulationScenario.from_json(obj)
        data = generate_spline_data(scen, np.random.default_rng(3))
        for c in range(data.n_cells):
            vals = data.cell_readings(c)
            assert np.abs(vals - vals[0]).max() < 1e-5

    def test_misspec_design_counts(self):
        data = generate_parametric_data(_misspec(), np.random.default_rng(4))
        assert data.n == 3 * (10 + 5 * 5)
        assert data.n_cells == 3 * 6
        # time-0 cells carry 10 readings at every level
        zero_cells = data.cell_size[data.cell_time == 0.0]
        assert list(zero_cells) == [10, 10, 10]

    def test_parametric_mean_shape(self):
        scen = _misspec()
        data = generate_parametric_data(scen, np.random.default_rng(5))
        x = arrhenius_x(np.asarray(data.temps_c), scen.kelvin_offset)
        # mean at t=0 is the intercept at every level
        for c in np.where(data.cell_time == 0.0)[0]:
            assert abs(np.mean(data.cell_readings(c)) - 1.0) < 0.05
        # hotter level decays faster on average
        t = 4320.0
        cold = data.cell_readings(int(np.where((data.cell_level == 0) & (data.cell_time == t))[0][0])).mean()
        hot = data.cell_readings(int(np.where((data.cell_level == 2) & (data.cell_time == t))[0][0])).mean()
        assert hot < cold

    def test_within_cell_correlation_converges(self):
        rng = np.random.default_rng(6)
        sizes = np.full(10_000, 2)
        sigma, rho = 0.5, 0.35
        noise = draw_cs_noise(rng, sizes, sigma, rho)
        pairs = noise.reshape(-1, 2)
        emp = np.mean(pairs[:, 0] * pairs[:, 1]) / sigma**2
        assert abs(emp - rho) < 0.05


class TestParametricFits:
    def test_linear_noiseless_recovery(self):
        obj = _misspec().to_json()
        obj["truth"]["sigma"] = 0.0
        scen = SimulationScenario.from_json(obj)
        data = generate_parametric_data(scen, np.random.default_rng(7))
        fit = fit_parametric("linear", data, scen.kelvin_offset)
        assert np.allclose(fit.params, (1.0, -3.5, 0.3), atol=1e-6)

    def test_sigmoid_noiseless_self_recovery(self):
        scen = _misspec()
        template = generate_parametric_data(scen, np.random.default_rng(8))
        x = arrhenius_x(np.asarray(template.temps_c), scen.kelvin_offset)
        truth = (1.0, 9.5, 0.05, 1.4)
        a, b0, b1, g = truth
        c = np.exp(b0 + b1 * x[template.cell_level])
        ratio = np.where(template.cell_time > 0, (template.cell_time / c) ** g, 0.0)
        means = a / (1.0 + ratio)
        from addtfit.dataset import AddtDataset

        data = AddtDataset(
            template.temps_c, template.cell_level, template.cell_time,
            template.cell_size, np.repeat(means, template.cell_size),
        )
        fit = fit_parametric("sigmoid", data, scen.kelvin_offset)
        assert np.allclose(fit.params, truth, atol=1e-5)
        assert fit.sse < 1e-12

    def test_mttf_closed_forms(self):
        from addtfit.simulation import ParametricFit

        lin = ParametricFit("linear", (1.0, -3.5, 0.3), 0.0, True)
        x30 = arrhenius_x(30.0, 273.15)
        m = lin.mttf(x30, 0.5002648536378371)
        assert m / 168.0 == pytest.approx(82.60, abs=1e-9)
        sig = ParametricFit("sigmoid", (1.0, 9.5, 0.05, 1.4), 0.0, True)
        t = sig.mttf(x30, 0.5)
        assert sig.mean(t, x30) == pytest.approx(0.5, rel=1e-9)
        assert np.isnan(sig.mttf(x30, 1.5))


class TestStudies:
    def test_recovery_smoke_and_determinism(self):
        m1 = run_recovery_study(RECOVERY, workers=1)
        m2 = run_recovery_study(RECOVERY, workers=2)
        assert m1.to_json() == m2.to_json()  # worker count cannot change results
        assert m1.n_replicates == 4
        assert set(m1.parameters) == {"beta", "sigma", "rho"}
        for stats in m1.parameters.values():
            assert stats["mse"] == pytest.approx(
                stats["bias"] ** 2 + stats["sd"] ** 2 * 3 / 4, rel=1e-9, abs=1e-15
            )
        assert m1.aic_identity_max_abs_err == 0.0
        assert len(m1.pointwise["grid"]) == RECOVERY.path_grid_points

    def test_recovery_with_coverage(self):
        obj = RECOVERY.to_json()
        obj["bootstrap_b"] = 8
        obj["n_datasets"] = 2
        scen = SimulationScenario.from_json(obj)
        m = run_recovery_study(scen, workers=1)
        assert m.coverage is not None
        assert set(m.coverage) >= {"beta", "sigma", "rho"}
        for name in ("beta", "sigma", "rho"):
            for method in ("quantile", "bias_corrected"):
                assert 0.0 <= m.coverage[name][method] <= 1.0

    def test_misspec_smoke(self):
        m = run_misspec_study(_misspec(), workers=2)
        assert set(m.path_metrics) == {"true_model", "wrong_model", "semiparametric"}
        for row in m.path_metrics.values():
            assert row["rimse"] == pytest.approx(
                np.sqrt(row["ibias"] ** 2 + row["rivar"] ** 2), rel=1e-9
            )
        assert m.mttf_metrics["true_value"] == pytest.approx(82.60, abs=1e-9)

    def test_scenario_json_round_trip(self, tmp_path):
        for scen in (RECOVERY, _misspec()):
            path = tmp_path / "scen.json"
            path.write_text(json.dumps(scen.to_json()))
            assert load_scenario(path) == scen

    def test_shipped_scenarios_load(self):
        import pathlib

        root = pathlib.Path(__file__).resolve().parents[1] / "scenarios"
        for name in (
            "recovery_n3_j5.json",
            "recovery_n6_j15.json",
            "recovery_cp_n6_j10.json",
            "misspec.json",
        ):
            scen = load_scenario(root / name)
            assert scen.n_datasets >= 100
        misspec = load_scenario(root / "misspec.json")
        # frozen threshold anchors the true-model MTTF at exactly 82.60 weeks
        truth = misspec.truth
        x30 = arrhenius_x(30.0, misspec.kelvin_offset)
        anchor = (misspec.mttf.threshold - truth.beta0) / (
            truth.beta1 * np.exp(truth.beta2 * x30)
        )
        assert anchor / 168.0 == pytest.approx(82.60, abs=1e-12)
