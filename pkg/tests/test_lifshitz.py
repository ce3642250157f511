import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.constants import c, hbar, k as k_B

from casimirlab.lifshitz import (
    ConvergenceError,
    GradientTable,
    Layer,
    LayeredMirror,
    MatsubaraGrid,
    PFAValidityWarning,
    QuadratureSpec,
    half_space,
    lifshitz_sum,
    matsubara_frequencies,
    plate_plate_free_energy,
    plate_plate_pressure,
    pressure_curve,
    reflection_coefficients,
    sphere_plate_force,
    sphere_plate_force_gradient,
)
from casimirlab.materials import GOLD, IDEAL_METAL, ITO, VACUUM, Drude, MaterialError
from oracles import ideal_energy, ideal_pressure, lifshitz_oracle

IDEAL = half_space(IDEAL_METAL)
VAC = half_space(VACUUM)


# ----------------------------------------------------------------- reflection

def test_vacuum_mirror_reflects_nothing():
    k = np.geomspace(1e5, 1e9, 7)
    for xi in (1e12, 1e15):
        te, tm = reflection_coefficients(VAC, xi, k)
        np.testing.assert_array_equal(te, 0.0)
        np.testing.assert_array_equal(tm, 0.0)


@pytest.mark.parametrize("xi", [0.0, 1e13, 1e16])
def test_ideal_metal_convention(xi):
    te, tm = reflection_coefficients(IDEAL, xi, np.array([1e6, 1e8]), "drude")
    np.testing.assert_array_equal(te, -1.0)
    np.testing.assert_array_equal(tm, 1.0)


def test_film_of_substrate_material_equals_half_space():
    film = LayeredMirror(GOLD, (Layer(GOLD, 37e-9),))
    k = np.geomspace(1e5, 1e9, 11)
    for xi in (1e13, 1e15, 1e17):
        np.testing.assert_allclose(reflection_coefficients(film, xi, k), reflection_coefficients(half_space(GOLD), xi, k),
                                   rtol=1e-13, atol=1e-15)


def test_half_space_fresnel_closed_form():
    xi, k = 2e15, np.array([3e6, 4e7])
    eps = 1 + GOLD.plasma_frequency**2 / (xi * (xi + GOLD.relaxation_rate))
    k0 = np.sqrt(k**2 + (xi / c) ** 2)
    k1 = np.sqrt(k**2 + eps * (xi / c) ** 2)
    te, tm = reflection_coefficients(half_space(GOLD), xi, k)
    np.testing.assert_allclose(te, (k0 - k1) / (k0 + k1), rtol=1e-13)
    np.testing.assert_allclose(tm, (eps * k0 - k1) / (eps * k0 + k1), rtol=1e-13)


def test_reflection_finite_under_extreme_evanescence():
    thick = LayeredMirror(GOLD, (Layer(ITO, 1e-3), Layer(GOLD, 1e-6)))
    te, tm = reflection_coefficients(thick, 1e18, np.array([1e3, 1e12]))
    assert np.all(np.isfinite(te)) and np.all(np.isfinite(tm))
    assert np.all(np.abs(te) <= 1) and np.all(np.abs(tm) <= 1)


def test_static_term_needs_policy():
    with pytest.raises(ValueError):
        reflection_coefficients(half_space(GOLD), 0.0, np.array([1e6]))
    te, tm = reflection_coefficients(half_space(GOLD), 0.0, np.array([1e6]), "drude")
    assert te == 0.0 and tm == 1.0
    te_p, _ = reflection_coefficients(half_space(GOLD), 0.0, np.array([1e6]), "plasma")
    assert -1.0 < te_p < 0.0


def test_ideal_metal_only_as_substrate():
    with pytest.raises(MaterialError):
        Layer(IDEAL_METAL, 1e-7)


# ----------------------------------------------------------------- Matsubara grid

def test_matsubara_frequencies():
    g = matsubara_frequencies(300.0)
    assert g.xi(0) == 0.0
    assert g.xi(1) == pytest.approx(2 * math.pi * k_B * 300 / hbar, rel=1e-15)
    assert g.xi(1) == pytest.approx(2.468e14, rel=1e-3)


@pytest.mark.parametrize("kw", [dict(temperature=0.0), dict(temperature=300.0, zero_frequency="hydro")])
def test_matsubara_validation(kw):
    with pytest.raises(ValueError):
        MatsubaraGrid(**kw)


@pytest.mark.parametrize("kw", [dict(nodes=4), dict(tolerance=0.1), dict(rule="simpson"), dict(nodes=64, max_nodes=32)])
def test_quadrature_spec_validation(kw):
    with pytest.raises(ValueError):
        QuadratureSpec(**kw)


# ----------------------------------------------------------------- sums

def test_ideal_metal_pressure_and_energy_low_temperature():
    g = MatsubaraGrid(1.0)
    d = 100e-9
    p = lifshitz_sum("pressure", IDEAL, IDEAL, d, g)
    assert p.value == pytest.approx(ideal_pressure(d), rel=5e-3)
    assert ideal_pressure(d) == pytest.approx(-13.0, rel=1e-3)
    e = plate_plate_free_energy(IDEAL, IDEAL, d, g)
    assert e == pytest.approx(ideal_energy(d), rel=5e-3)


def test_vacuum_gives_exactly_zero(au, grid300):
    assert plate_plate_pressure(au, VAC, 1e-7, grid300) == 0.0
    assert plate_plate_free_energy(VAC, au, 1e-7, grid300) == 0.0


@pytest.mark.parametrize("d", [0.5e-9, 20e-6])
def test_separation_domain(au, grid300, d):
    with pytest.raises(ValueError):
        plate_plate_pressure(au, au, d, grid300)


@pytest.mark.parametrize("pair", ["au-au", "au-ito"])
def test_engine_matches_brute_force_oracle(au, ito, grid300, pair):
    m2 = au if pair == "au-au" else ito
    d = 100e-9
    assert plate_plate_pressure(au, m2, d, grid300) == pytest.approx(lifshitz_oracle("pressure", au, m2, d), rel=1e-4)


def test_energy_oracle(au, ito, grid300):
    d = 80e-9
    assert plate_plate_free_energy(au, ito, d, grid300) == pytest.approx(lifshitz_oracle("energy", au, ito, d), rel=1e-4)


def test_energy_pressure_consistency(au, ito, grid300):
    d, h = 80e-9, 0.05e-9
    quad = QuadratureSpec(tolerance=1e-8)
    E = [plate_plate_free_energy(au, ito, d + s * h, grid300, quad) for s in (-2, -1, 1, 2)]
    dEdd = (E[0] - 8 * E[1] + 8 * E[2] - E[3]) / (12 * h)
    assert dEdd == pytest.approx(-plate_plate_pressure(au, ito, d, grid300, quad), rel=1e-3)


def test_thick_film_converges_to_half_space(grid300):
    film = LayeredMirror(Drude(1e15, 1e13), (Layer(ITO, 2e-6),))
    bulk = half_space(ITO)
    au = half_space(GOLD)
    for d in (50e-9, 150e-9):
        assert plate_plate_pressure(au, film, d, grid300) == pytest.approx(plate_plate_pressure(au, bulk, d, grid300), rel=1e-4)


def test_transparency_ordering_and_monotonicity(au, ito, grid300):
    d = np.linspace(50e-9, 150e-9, 11)
    p_au = pressure_curve(au, au, d, grid300)
    p_ito = pressure_curve(au, ito, d, grid300)
    assert np.all(np.abs(p_ito) < np.abs(p_au))
    assert np.all(np.diff(np.abs(p_au)) < 0)
    assert np.all(np.diff(np.abs(p_ito)) < 0)


@settings(max_examples=15, deadline=None)
@given(st.floats(5e-9, 5e-6), st.floats(1.01, 3.0))
def test_pressure_magnitude_decreases_property(d, factor):
    g = MatsubaraGrid(300.0)
    au = half_space(GOLD)
    d2 = min(d * factor, 1e-5)
    assert abs(plate_plate_pressure(au, au, d2, g)) < abs(plate_plate_pressure(au, au, d, g))


def test_plasma_policy_is_stronger(au, grid300):
    plasma = MatsubaraGrid(300.0, "plasma")
    assert abs(plate_plate_pressure(au, au, 500e-9, plasma)) > abs(plate_plate_pressure(au, au, 500e-9, grid300))


def test_convergence_error_reports_achieved_error(au, grid300):
    tight = QuadratureSpec(nodes=8, max_nodes=8, tolerance=1e-12)
    with pytest.raises(ConvergenceError) as info:
        plate_plate_pressure(au, au, 100e-9, grid300, tight)
    assert info.value.achieved_error > 0


def test_workers_do_not_change_results(au, ito, grid300):
    d = np.geomspace(50e-9, 1e-6, 8)
    a = pressure_curve(au, ito, d, grid300, workers=1)
    b = pressure_curve(au, ito, d, grid300, workers=4)
    np.testing.assert_array_equal(a, b)


# ----------------------------------------------------------------- sphere-plate

def test_pfa_ideal_metal_gradient():
    g = MatsubaraGrid(1.0)
    R, d = 100e-6, 100e-9
    res = sphere_plate_force_gradient(R, d, IDEAL, IDEAL, g)
    assert res.value / R == pytest.approx(2 * math.pi * 13.0, rel=5e-3)
    assert res.value / R == pytest.approx(81.7, rel=5e-3)
    assert not res.pfa_warning


def test_pfa_force_scales_with_radius(au, ito, grid300):
    a = sphere_plate_force(100e-6, 100e-9, au, ito, grid300).value
    b = sphere_plate_force(200e-6, 100e-9, au, ito, grid300).value
    assert a < 0
    assert b == pytest.approx(2 * a, rel=1e-14)
    assert sphere_plate_force(100e-6, 100e-9, au, ito, grid300).value == pytest.approx(
        2 * math.pi * 100e-6 * plate_plate_free_energy(au, ito, 100e-9, grid300), rel=1e-14)


def test_pfa_validity_flag(au, grid300):
    with pytest.warns(PFAValidityWarning):
        res = sphere_plate_force_gradient(1e-6, 100e-9, au, au, grid300)
    assert res.pfa_warning
    assert float(res) == res.value


def test_gradient_table_interpolates(au, grid300):
    table = GradientTable(100e-6, au, au, grid300, d_min=40e-9, d_max=1.2e-6, n=48)
    for d in (55e-9, 97e-9, 333e-9, 1e-6):
        exact = sphere_plate_force_gradient(100e-6, d, au, au, grid300).value
        assert float(table(d)) == pytest.approx(exact, rel=1e-4)
    with pytest.raises(ValueError):
        table(10e-9)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert np.all(table(np.array([50e-9, 60e-9])) > 0)
