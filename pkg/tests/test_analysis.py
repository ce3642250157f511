import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from casimirlab import auxforce
from casimirlab.analysis import (
    CalibrationResult,
    CoverageError,
    DegenerateSweepError,
    EnsembleStats,
    ForceCurve,
    analyze_run,
    background_curve,
    compare_pairs,
    drift_slope,
    ensemble_statistics,
    extract_force_gradient,
    extract_hydrodynamic,
    fit_calibration,
    interpolate_at,
    mean_curve,
    summarize,
)
from casimirlab.fitting import FitError, SingularJacobianError, levenberg_marquardt
from casimirlab.lifshitz import GradientTable, MatsubaraGrid, half_space
from casimirlab.materials import IDEAL_METAL
from casimirlab.rig import RigConfig, RunRecord, simulate_run, zero_gradient
from oracles import ideal_pressure


def test_noise_free_round_trip(gold_table):
    cfg = RigConfig(plate="gold", d0=1234.5e-9, beta=3.3e7,
                    set_points=tuple(1234.5e-9 - np.geomspace(1100e-9, 50e-9, 50)))
    run, truth = simulate_run(cfg, gold_table)
    res = analyze_run(run, cfg)
    assert abs(res.calibration.d0_est - truth.d0) < 0.1e-9
    assert res.calibration.beta_est == pytest.approx(truth.beta, rel=1e-3)
    np.testing.assert_allclose(res.casimir.d, truth.d, rtol=1e-9)
    np.testing.assert_allclose(res.casimir.value, gold_table(truth.d) / cfg.R, rtol=1e-6)


def test_round_trip_with_residual_potential(gold_table):
    cfg = RigConfig(plate="gold", V0_base=3e-3, V0_span=1e-3)
    run, truth = simulate_run(cfg, gold_table)
    res = analyze_run(run, cfg, weighting="relative")
    assert abs(res.calibration.d0_est - truth.d0) < 0.1e-9
    np.testing.assert_allclose(res.casimir.value, gold_table(truth.d) / cfg.R, rtol=1e-4)


def test_ideal_metal_recovery():
    R = 100e-6
    grid = MatsubaraGrid(1.0)
    ideal = half_space(IDEAL_METAL)
    table = GradientTable(R, ideal, ideal, grid, d_min=40e-9, d_max=1.2e-6, n=24)
    cfg = RigConfig(temperature=1.0)
    run, truth = simulate_run(cfg, table)
    res = analyze_run(run, cfg)
    np.testing.assert_allclose(res.casimir.value, -2 * math.pi * ideal_pressure(truth.d), rtol=5e-3)


def test_two_set_points_is_degenerate():
    cfg = RigConfig(set_points=(100e-9, 200e-9))
    run, _ = simulate_run(cfg)
    with pytest.raises(DegenerateSweepError):
        fit_calibration(run, cfg)


def test_narrow_sweep_is_degenerate():
    cfg = RigConfig(set_points=tuple(np.linspace(0, 30e-9, 12)))
    run, _ = simulate_run(cfg)
    with pytest.raises(DegenerateSweepError):
        fit_calibration(run, cfg)


def test_fit_invariant_to_point_order(gold_table):
    cfg = RigConfig(calib_noise=2e-5)
    run, _ = simulate_run(cfg, gold_table, seed=4)
    perm = np.random.default_rng(0).permutation(run.d_pz.size)
    shuffled = RunRecord(run.run_index, run.seed, *(getattr(run, c)[perm] for c in RunRecord.COLUMNS))
    a = fit_calibration(run, cfg)
    b = fit_calibration(shuffled, cfg)
    assert a.d0_est == b.d0_est and a.beta_est == b.beta_est


def test_uncertainties_reflect_noise(gold_table):
    cfg = RigConfig(calib_noise=80e-6)
    fits = [fit_calibration(simulate_run(cfg, gold_table, seed=s)[0], cfg) for s in range(40)]
    d0 = np.array([f.d0_est for f in fits])
    sig = np.median([f.d0_sigma for f in fits])
    assert np.std(d0, ddof=1) == pytest.approx(sig, rel=0.35)
    assert abs(np.mean(d0) - cfg.d0) < 3 * sig / math.sqrt(len(fits)) + 0.05e-9
    assert set(fits[0].to_dict()) >= {"d0_est", "beta_est", "covariance"}


def test_electrostatic_only_background_subtracts_exactly():
    cfg = RigConfig(V0_base=5e-3)
    run, truth = simulate_run(cfg, zero_gradient)
    cal = fit_calibration(run, cfg)
    cas = extract_force_gradient(run, cal, cfg)
    bg = background_curve(run, cal, cfg)
    assert np.max(np.abs(cas.value)) <= 1e-10 * np.max(np.abs(bg.value))
    # every retained point is pure background here
    assert np.all(cas.flags)


def test_background_is_small_for_gold(gold_table):
    cfg = RigConfig()
    run, _ = simulate_run(cfg, gold_table)
    cas = extract_force_gradient(run, fit_calibration(run, cfg), cfg)
    assert not np.any(cas.flags[cas.d < 300e-9])


def test_hydrodynamic_recovery(gold_table):
    cfg = RigConfig()
    run, truth = simulate_run(cfg, gold_table)
    hyd = extract_hydrodynamic(run, fit_calibration(run, cfg), cfg)
    expected = 6 * math.pi * cfg.viscosity * cfg.R**2 * cfg.omega2 * cfg.modulation_amplitude / truth.d
    np.testing.assert_allclose(hyd.value, expected, rtol=5e-3)
    assert hyd.unit == "N"
    with pytest.raises(AttributeError):
        hyd.force_gradient_over_R


def test_zero_modulation_gives_zero_hydro(gold_table):
    cfg = RigConfig()
    run, _ = simulate_run(cfg, gold_table)
    run.meas_quadrature_w2 = np.zeros_like(run.meas_quadrature_w2)
    hyd = extract_hydrodynamic(run, fit_calibration(run, cfg), cfg)
    np.testing.assert_array_equal(hyd.value, 0.0)


def test_interpolation_is_exact_for_power_law():
    d = np.geomspace(50e-9, 500e-9, 20)
    curve = ForceCurve(d, 3.0 / d**3, "casimir", 0)
    assert interpolate_at(curve, 80e-9, 20e-9, exponent=3) == pytest.approx(3.0 / 80e-9**3, rel=1e-12)
    assert interpolate_at(curve, d[4], 1e-9) == curve.value[4]
    assert interpolate_at(curve, 20e-9, 10e-9) is None


def test_identical_curves_have_zero_spread():
    d = np.geomspace(50e-9, 500e-9, 20)
    curves = [ForceCurve(d, 1 / d, "casimir", i) for i in range(30)]
    stats = ensemble_statistics(curves, 80e-9, 10e-9)
    assert stats.std == 0.0 and stats.sem == 0.0
    assert stats.count == 30


def test_coverage_error_lists_missing_runs():
    near = np.geomspace(50e-9, 500e-9, 20)
    far = np.geomspace(200e-9, 500e-9, 20)
    curves = [ForceCurve(near, 1 / near, "casimir", i) for i in range(30)] + [ForceCurve(far, 1 / far, "casimir", 99)]
    with pytest.raises(CoverageError) as info:
        ensemble_statistics(curves, 80e-9, 10e-9)
    assert info.value.missing == [99]
    with pytest.raises(CoverageError):
        ensemble_statistics(curves[:5], 80e-9, 10e-9)


def test_freedman_diaconis_histogram():
    v = np.random.default_rng(1).normal(10, 1, 580)
    stats = summarize(v, 80e-9)
    expected_counts, expected_edges = np.histogram(v, bins="fd")
    np.testing.assert_array_equal(stats.counts, expected_counts)
    np.testing.assert_array_equal(stats.bin_edges, expected_edges)
    assert stats.bin_rule == "freedman-diaconis"
    assert EnsembleStats.from_dict(stats.to_dict()).to_dict() == stats.to_dict()


def test_sem_scales_as_inverse_sqrt_n():
    rng = np.random.default_rng(2)
    v = rng.normal(100, 5, 580)
    full = summarize(v, 80e-9)
    sems = [summarize(rng.choice(v, 100, replace=False), 80e-9).sem for _ in range(200)]
    assert np.mean(sems) == pytest.approx(full.sem * math.sqrt(580 / 100), rel=0.05)


def test_compare_pairs():
    a = summarize(np.random.default_rng(3).normal(10, 1, 100), 80e-9)
    b = summarize(np.random.default_rng(4).normal(5.5, 0.5, 100), 80e-9)
    assert compare_pairs(a, a).value == 1.0
    r = compare_pairs(a, b)
    assert compare_pairs(b, a).value == pytest.approx(1 / r.value, rel=1e-14)
    expected = r.value * math.hypot(a.sem / a.mean, b.sem / b.mean)
    assert r.uncertainty == pytest.approx(expected)
    with pytest.raises(ZeroDivisionError):
        compare_pairs(summarize(np.zeros(5), 80e-9), a)
    with pytest.raises(ValueError):
        compare_pairs(a, summarize(np.ones(5), 90e-9))


def test_drift_slope_and_mean_curve():
    assert drift_slope(1e-6 + 0.2e-9 * np.arange(50)) == pytest.approx(0.2e-9, rel=1e-9)
    d = np.geomspace(50e-9, 500e-9, 20)
    curves = [ForceCurve(d, k / d, "hydrodynamic", k) for k in (1.0, 3.0)]
    np.testing.assert_allclose(mean_curve(curves, [100e-9], 50e-9), [2.0 / 100e-9], rtol=1e-12)


def test_force_curve_validation():
    with pytest.raises(ValueError):
        ForceCurve([1e-7], [1.0], "optical", 0)
    with pytest.raises(ValueError):
        ForceCurve([-1e-7], [1.0], "casimir", 0)


def test_calibration_result_sigmas():
    cal = CalibrationResult(1e-6, 2.0, np.diag([4e-18, 0.01]), 0.0, 10)
    assert cal.d0_sigma == pytest.approx(2e-9)
    assert cal.beta_sigma == pytest.approx(0.1)


# ----------------------------------------------------------------- optimiser

@settings(max_examples=25, deadline=None)
@given(st.floats(0.5, 3.0), st.floats(-2.0, 2.0))
def test_levenberg_marquardt_recovers_exponential(a, b):
    t = np.linspace(0, 2, 30)
    y = a * np.exp(b * t)

    def resid(p):
        return p[0] * np.exp(p[1] * t) - y

    def jac(p):
        e = np.exp(p[1] * t)
        return np.column_stack([e, p[0] * t * e])

    res = levenberg_marquardt(resid, jac, np.array([1.0, 0.0]))
    assert res.converged
    np.testing.assert_allclose(res.x, [a, b], rtol=1e-7, atol=1e-9)


def test_levenberg_marquardt_failures():
    t = np.linspace(0, 1, 10)
    with pytest.raises(SingularJacobianError):
        levenberg_marquardt(lambda p: p[0] + p[1] - t, lambda p: np.ones((10, 2)), np.array([0.0, 0.0]))
    with pytest.raises(FitError) as info:
        levenberg_marquardt(lambda p: np.array([10 * (p[1] - p[0] ** 2), 1 - p[0]]),
                            lambda p: np.array([[-20 * p[0], 10.0], [-1.0, 0.0]]), np.array([-1.2, 1.0]), max_iter=2)
    assert info.value.best is not None
