import io
from itertools import combinations

import numpy as np
import pytest

from addtfit.bspline import QuantileKnots
from addtfit.covariance import ErrorStructure
from addtfit.dataset import load_addt_csv, stress_set
from addtfit.errors import RankDeficiencyError, ValidationError
from addtfit.fit import (
    FitControls,
    ModelFit,
    fit_given_beta,
    monotone_gls,
    profile_fit,
    reml_rho,
    reml_sigma,
    solve_monotone_ls,
    unique_design,
)
from addtfit.simulation import (
    SimulationScenario,
    SplineTruth,
    generate_spline_data,
)


def enumeration_oracle(A, b):
    """Best feasible solution over all 2^(p-1) equality patterns (dense algebra)."""
    p = A.shape[1]
    best = None
    for r in range(p):
        for extra in combinations(range(1, p), r):
            starts = [0] + list(extra)
            Am = np.add.reduceat(A, starts, axis=1)
            v, *_ = np.linalg.lstsq(Am, b, rcond=None)
            g = np.repeat(v, np.diff(starts + [p]))
            if np.all(np.diff(g) <= 1e-10):
                obj = float(np.sum((A @ g - b) ** 2))
                if best is None or obj < best[0]:
                    best = (obj, g)
    return best


def random_block_structure(rng, n):
    sizes = []
    left = n
    while left > 0:
        s = int(rng.integers(1, min(3, left) + 1))
        sizes.append(s)
        left -= s
    return tuple(sizes)


def test_gls_identity_feasible():
    s = ErrorStructure(sigma=1.0, rho=0.0, block_sizes=(1, 1))
    assert np.allclose(monotone_gls(np.eye(2), [2.0, 1.0], s), [2.0, 1.0])


def test_gls_pooled_solution():
    s = ErrorStructure(sigma=1.0, rho=0.0, block_sizes=(1, 1))
    assert np.allclose(monotone_gls(np.eye(2), [1.0, 2.0], s), [1.5, 1.5])


def test_gls_matches_enumeration_on_random_instances():
    rng = np.random.default_rng(2024)
    for _ in range(120):
        p = int(rng.integers(2, 5))
        n = int(rng.integers(p + 1, 9))
        X = rng.normal(size=(n, p))
        y = rng.normal(size=n)
        sizes = random_block_structure(rng, n)
        rho = float(rng.uniform(0.0, 0.8))
        sigma = float(rng.uniform(0.5, 2.0))
        structure = ErrorStructure(sigma=sigma, rho=rho, block_sizes=sizes)
        gamma = monotone_gls(X, y, structure)
        # independent dense-algebra objective
        R = np.zeros((n, n))
        start = 0
        for m in sizes:
            R[start : start + m, start : start + m] = (1 - rho) * np.eye(m) + rho
            start += m
        Rinv = np.linalg.inv(R)

        def obj(g):
            r = y - X @ g
            return float(r @ Rinv @ r)

        L = np.linalg.cholesky(Rinv)
        best_obj, best_g = enumeration_oracle(L.T @ X, L.T @ y)
        assert np.all(np.diff(gamma) <= 1e-10)
        assert obj(gamma) <= best_obj + 1e-8 * (1 + abs(best_obj))


def test_gls_kkt_residual_small():
    rng = np.random.default_rng(5)
    A = rng.normal(size=(20, 4))
    b = rng.normal(size=20)
    res = solve_monotone_ls(A, b)
    grad = A.T @ (A @ res.gamma - b)
    # stationarity: gradient plus multiplier combination vanishes
    lam = np.nan_to_num(res.multipliers, nan=0.0)
    C = np.zeros((res.gamma.size - 1, res.gamma.size))
    for i in range(1, res.gamma.size):
        C[i - 1, i] = 1.0
        C[i - 1, i - 1] = -1.0
    resid = grad + C.T @ lam[1:]
    assert np.abs(resid).max() < 1e-8
    assert np.all(lam[1:] >= -1e-8)


def test_gls_constrained_never_beats_unconstrained():
    rng = np.random.default_rng(17)
    for _ in range(40):
        p = int(rng.integers(2, 5))
        n = int(rng.integers(p + 1, 12))
        A = rng.normal(size=(n, p))
        b = rng.normal(size=n)
        g_con = solve_monotone_ls(A, b).gamma
        g_unc = np.linalg.lstsq(A, b, rcond=None)[0]
        q_con = np.sum((A @ g_con - b) ** 2)
        q_unc = np.sum((A @ g_unc - b) ** 2)
        assert q_con >= q_unc - 1e-10
        if np.all(np.diff(g_unc) <= 0):
            assert q_con == pytest.approx(q_unc, abs=1e-10)


def test_gls_invariant_to_replicate_order():
    rng = np.random.default_rng(3)
    X = np.repeat(rng.normal(size=(3, 2)), (2, 3, 1), axis=0)
    y = rng.normal(size=6)
    s = ErrorStructure(sigma=1.0, rho=0.4, block_sizes=(2, 3, 1))
    g1 = monotone_gls(X, y, s)
    y2 = y.copy()
    y2[2:5] = y[2:5][::-1]  # permute replicates inside the middle cell
    g2 = monotone_gls(X, y2, s)
    assert np.allclose(g1, g2, atol=1e-12)


def test_gls_rank_deficiency_reports_empty_columns():
    X = np.zeros((6, 3))
    X[:, 0] = 1.0
    X[:, 2] = np.arange(6)
    s = ErrorStructure(sigma=1.0, rho=0.0, block_sizes=(6,))
    with pytest.raises(RankDeficiencyError) as exc:
        monotone_gls(X, np.arange(6.0), s)
    assert exc.value.empty_columns == (1,)


# --- unique_design ----------------------------------------------------------


def test_unique_design_all_distinct():
    X = np.random.default_rng(0).normal(size=(5, 2))
    X_u, p_u = unique_design(X, [2.0, 1.0])
    assert p_u == 2 and np.array_equal(X_u, X)


def test_unique_design_full_tie():
    X = np.random.default_rng(0).normal(size=(5, 2))
    X_u, p_u = unique_design(X, [1.5, 1.5])
    assert p_u == 1
    assert np.allclose(X_u[:, 0], X.sum(axis=1))


def test_unique_design_paper_truth_tie():
    X = np.random.default_rng(1).normal(size=(8, 6))
    gamma = [1.0, 0.9, 0.8, 0.7, 0.6, 0.6]
    X_u, p_u = unique_design(X, gamma)
    assert p_u == 5
    assert np.allclose(X_u @ [1.0, 0.9, 0.8, 0.7, 0.6], X @ gamma)


# --- REML -------------------------------------------------------------------


def test_reml_sigma_rms_case():
    r = np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0])
    s = ErrorStructure(sigma=1.0, rho=0.0, block_sizes=(9,))
    assert reml_sigma(r, s, 0) == pytest.approx(1.0, rel=1e-14)


def test_reml_sigma_zero_residual():
    s = ErrorStructure(sigma=1.0, rho=0.3, block_sizes=(2, 2))
    assert reml_sigma(np.zeros(4), s, 1) == 0.0


def test_reml_sigma_single_cell_closed_form():
    s = ErrorStructure(sigma=1.0, rho=0.5, block_sizes=(2,))
    val = reml_sigma(np.array([1.0, 1.0]), s, 1)
    assert val == pytest.approx(np.sqrt(4.0 / 3.0), rel=1e-12)


def test_reml_sigma_requires_df():
    s = ErrorStructure(sigma=1.0, rho=0.0, block_sizes=(2,))
    with pytest.raises(ValidationError):
        reml_sigma(np.ones(2), s, 2)


def test_reml_rho_unidentifiable_warns_zero():
    y = np.arange(4.0)
    X = np.column_stack([np.ones(4), np.arange(4.0)])
    with pytest.warns(UserWarning, match="singleton"):
        assert reml_rho(y, X, [1.0, 0.5], X, (1, 1, 1, 1)) == 0.0


def test_reml_rho_beats_grid_audit():
    rng = np.random.default_rng(12)
    sizes = (4,) * 15
    n = sum(sizes)
    X = np.repeat(rng.normal(size=(15, 2)), 4, axis=0)
    rho_true = 0.4
    noise = []
    for _ in range(15):
        shared = rng.normal() * np.sqrt(rho_true)
        noise.extend(shared + np.sqrt(1 - rho_true) * rng.normal(size=4))
    gamma = np.array([1.0, 0.5])
    y = X @ gamma + 0.3 * np.array(noise)
    rho_hat = reml_rho(y, X, gamma, X, sizes)

    from addtfit.covariance import corr_logdet, inverse_apply

    def objective(rho):
        st = ErrorStructure(sigma=1.0, rho=rho, block_sizes=sizes)
        r = y - X @ gamma
        quad = float(r @ inverse_apply(st, r))
        sigma2 = quad / (n - 2)
        M = X.T @ np.column_stack([inverse_apply(st, X[:, j]) for j in range(2)])
        return -(n - 2) * np.log(sigma2) - corr_logdet(st) - np.linalg.slogdet(M)[1]

    best = objective(rho_hat)
    for rho in np.linspace(1e-6, 1 - 1e-6, 101):
        assert best >= objective(rho) - 1e-6


# --- fit_given_beta / profile_fit -------------------------------------------


def _scenario(temps, times, sigma=0.019, rho=0.2, reps=10):
    return SimulationScenario(
        study="recovery",
        temps_c=temps,
        times=times,
        reps_per_cell=reps,
        truth=SplineTruth(
            degree=2,
            n_interior=3,
            gamma=(1.0, 0.9, 0.8, 0.7, 0.6, 0.6),
            beta=0.83,
            sigma=sigma,
            rho=rho,
        ),
        n_datasets=1,
        seed=55,
        beta_range=(0.0, 2.0),
    )


TIMES_J10 = (5, 10, 30, 50, 70, 90, 110, 130, 150, 170)
TIMES_J15 = (10, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120, 130, 140, 150, 170)


def test_zero_noise_recovery_at_true_beta():
    scen = _scenario((50, 65, 80), TIMES_J10, sigma=0.0, rho=0.0)
    rng = np.random.default_rng([55, 0])
    data = generate_spline_data(scen, rng)
    stresses = stress_set(data, scen.kelvin_offset)
    spec = QuantileKnots.default(2, 3).build(data, stresses, 0.83)
    res = fit_given_beta(data, stresses, spec, 0.83)
    assert np.abs(np.asarray(res.gamma) - scen.truth.gamma).max() < 1e-6
    assert res.degenerate_sigma
    assert res.sigma < 1e-8


def test_loglik_stabilizes_at_convergence():
    scen = _scenario((50, 65, 80), TIMES_J10)
    data = generate_spline_data(scen, np.random.default_rng([55, 1]))
    stresses = stress_set(data, scen.kelvin_offset)
    spec = QuantileKnots.default(2, 3).build(data, stresses, 0.83)
    res = fit_given_beta(
        data, stresses, spec, 0.83, FitControls(track_loglik=True)
    )
    assert res.converged
    assert len(res.loglik_trace) >= 2
    assert abs(res.loglik_trace[-1] - res.loglik_trace[-2]) < 1e-9


def test_gamma_recovery_large_design_beta_fixed():
    scen = _scenario((30, 40, 50, 60, 70, 80), TIMES_J15)
    data = generate_spline_data(scen, np.random.default_rng([55, 2]))
    stresses = stress_set(data, scen.kelvin_offset)
    spec = QuantileKnots.default(2, 3).build(data, stresses, 0.83)
    res = fit_given_beta(data, stresses, spec, 0.83)
    assert np.abs(np.asarray(res.gamma) - scen.truth.gamma).max() < 0.02


def test_response_scaling_equivariance():
    scen = _scenario((50, 65, 80), TIMES_J10)
    data = generate_spline_data(scen, np.random.default_rng([55, 3]))
    stresses = stress_set(data, scen.kelvin_offset)
    # build at the largest beta tested: smaller betas keep warped times inside
    spec = QuantileKnots.default(2, 3).build(data, stresses, 1.1)
    betas = [0.5, 0.83, 1.1]
    c = 3.7
    from addtfit.dataset import AddtDataset

    scaled = AddtDataset(
        data.temps_c, data.cell_level, data.cell_time, data.cell_size,
        c * data.y, time_unit=data.time_unit,
    )
    lls, lls_scaled = [], []
    for b in betas:
        r1 = fit_given_beta(data, stresses, spec, b)
        r2 = fit_given_beta(scaled, stresses, spec, b)
        assert np.allclose(c * np.asarray(r1.gamma), r2.gamma, rtol=1e-6)
        assert r2.sigma == pytest.approx(c * r1.sigma, rel=1e-6)
        assert r2.rho == pytest.approx(r1.rho, abs=1e-4)
        lls.append(r1.loglik)
        lls_scaled.append(r2.loglik)
    assert np.argmax(lls) == np.argmax(lls_scaled)


def test_profile_fit_maximizes_over_trace():
    scen = _scenario((50, 65, 80), TIMES_J10)
    data = generate_spline_data(scen, np.random.default_rng([55, 4]))
    stresses = stress_set(data, scen.kelvin_offset)
    fit = profile_fit(
        data, stresses, QuantileKnots.default(2, 3),
        FitControls(beta_range=(0.0, 2.0)),
    )
    best_ll = max(ll for _, ll in fit.beta_trace)
    assert fit.loglik >= best_ll - 1e-12
    assert not fit.beta_at_boundary
    assert fit.aic == -2.0 * fit.loglik + 2.0 * (fit.p_u + 3)
    assert fit.edf == fit.p_u + 3


def test_profile_fit_recovers_zero_acceleration():
    scen = SimulationScenario(
        study="recovery",
        temps_c=(50, 65, 80),
        times=TIMES_J10,
        reps_per_cell=10,
        truth=SplineTruth(
            degree=2, n_interior=3,
            gamma=(1.0, 0.9, 0.8, 0.7, 0.6, 0.6),
            beta=0.0, sigma=0.01, rho=0.0,
        ),
        n_datasets=1,
        seed=77,
        beta_range=(0.0, 2.0),
    )
    data = generate_spline_data(scen, np.random.default_rng([77, 0]))
    stresses = stress_set(data, scen.kelvin_offset)
    fit = profile_fit(
        data, stresses, QuantileKnots.default(2, 3),
        FitControls(beta_range=(0.0, 2.0)),
    )
    assert fit.beta < 0.05


def test_model_fit_json_round_trip():
    scen = _scenario((50, 65, 80), TIMES_J10)
    data = generate_spline_data(scen, np.random.default_rng([55, 5]))
    stresses = stress_set(data, scen.kelvin_offset)
    fit = profile_fit(
        data, stresses, QuantileKnots.default(2, 3),
        FitControls(beta_range=(0.0, 2.0)),
    )
    back = ModelFit.from_json(fit.to_json())
    assert back == fit
