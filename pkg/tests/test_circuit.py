import math
import warnings

import numpy as np
import pytest
import scipy.constants as sc
from hypothesis import given, settings
from hypothesis import strategies as st

from jdpd_lab.circuit import (
    CircuitState,
    FluxBias,
    JdpdParams,
    JunctionParams,
    branch_currents,
    circuit_energy,
    combine_flux,
    crossover_temperature,
    double_well_minimum,
    equations_of_motion,
    node_phase,
    plasma_frequency,
    reduced_potential,
    reduced_potential_gradient,
    split_flux,
    stewart_mccumber,
    thermal_noise_sigma,
)

J = JunctionParams()
finite = st.floats(-10, 10, allow_nan=False)


def test_stewart_mccumber_default_junction():
    assert stewart_mccumber(J) == pytest.approx(53, abs=1)


def test_stewart_mccumber_matches_direct_formula():
    # beta_C = 2 pi Ic R^2 C / Phi0 with C from area
    c = 50e-15 * (6e-6 / 10e-6)
    expected = 2 * math.pi * 6e-6 * 310.0 ** 2 * c / sc.physical_constants["mag. flux quantum"][0]
    assert stewart_mccumber(J) == pytest.approx(expected, rel=1e-9)


@pytest.mark.parametrize("field", ["shunt_resistance", "critical_current", "capacitance_per_area",
                                   "critical_current_density"])
def test_junction_rejects_non_positive(field):
    with pytest.raises(ValueError, match=field):
        JunctionParams(**{field: 0.0})


def test_capacitance_from_area():
    assert J.capacitance == pytest.approx(30e-15, rel=1e-12)


def test_plasma_frequency_hand_value():
    phi0 = sc.h / (2 * sc.e)
    expected = math.sqrt(2 * math.pi * 6e-6 / (phi0 * 30e-15))
    assert plasma_frequency(J) == pytest.approx(expected, rel=1e-6)
    assert plasma_frequency(J) == pytest.approx(7.8e11, rel=0.01)


def test_crossover_temperature():
    w = plasma_frequency(J)
    assert crossover_temperature(w) == pytest.approx(sc.hbar * w / (2 * math.pi * sc.k), rel=1e-8)
    assert crossover_temperature(w) == pytest.approx(0.95, abs=0.01)


@pytest.mark.parametrize("w", [0.0, -1.0])
def test_crossover_temperature_rejects_bad_frequency(w):
    with pytest.raises(ValueError):
        crossover_temperature(w)


def test_thermal_noise_sigma():
    assert thermal_noise_sigma(J, 0.95, 1e-12) == pytest.approx(math.sqrt(2 * sc.k * 0.95 / (310 * 1e-12)), rel=1e-8)
    assert thermal_noise_sigma(J, 0.95, 1e-12) == pytest.approx(0.29e-6, rel=0.02)
    assert thermal_noise_sigma(J, 0.0, 1e-12) == 0.0
    with pytest.raises(ValueError):
        thermal_noise_sigma(J, 0.95, 0.0)
    with pytest.raises(ValueError):
        thermal_noise_sigma(J, -1.0, 1e-12)


def test_split_flux_examples():
    assert split_flux(FluxBias(math.pi, 0.0)) == (math.pi, math.pi)
    p1, p2 = split_flux(FluxBias(math.pi / 2, math.pi / 4))
    assert p1 == pytest.approx(3 * math.pi / 4) and p2 == pytest.approx(math.pi / 4)


@given(finite, finite)
def test_split_combine_roundtrip(a, b):
    bias = combine_flux(*split_flux(FluxBias(a, b)))
    assert bias.phi_plus == pytest.approx(a, abs=1e-12) and bias.phi_minus == pytest.approx(b, abs=1e-12)


def test_node_phase_homogeneous(params):
    assert node_phase(CircuitState(), FluxBias(0.0, 0.0), 0.0, params) == 0.0


@given(st.floats(-5, 5))
def test_node_phase_cancels_symmetric_loop_flux(params, x):
    # phi_1 = phi_2 = x means phi_+ = x, phi_- = 0; opposite windings cancel
    assert node_phase(CircuitState(), FluxBias(x, 0.0), 0.0, params) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=200)
@given(finite, finite, finite, finite, st.floats(-20e-6, 20e-6))
def test_node_current_conservation(params, d1, d2, pp, pm, i_in):
    phi_1, phi_2 = split_flux(FluxBias(pp, pm))
    y = np.array([d1, d2, 0.0, 0.0])
    phi_a, i1, i2 = branch_currents(y, phi_1, phi_2, i_in, params)
    i_l = params.constants.reduced_flux_quantum * phi_a / params.central_inductance
    scale = abs(i_in) + abs(i1) + abs(i2) + abs(i_l) + 1e-18
    assert abs(i_in - i_l - i1 - i2) / scale < 1e-12


def test_zero_state_is_equilibrium(params):
    d = equations_of_motion(CircuitState(), FluxBias(0.0, 0.0), 0.0, 0.0, 0.0, params)
    assert np.all(d == 0.0)


def test_equations_of_motion_match_energy_gradient(params):
    # Acceleration equals -dE/d(delta) / (C k^2) without damping at zero velocity.
    bias = FluxBias(2.0, 0.3)
    y = np.array([0.4, -0.7, 0.0, 0.0])
    d = equations_of_motion(CircuitState.from_mechanical(y), bias, 0.0, 0.0, 0.0, params)
    k = params.constants.reduced_flux_quantum
    h = 1e-6
    for i in (0, 1):
        yp, ym = y.copy(), y.copy()
        yp[i] += h
        ym[i] -= h
        grad = (circuit_energy(yp, bias, params) - circuit_energy(ym, bias, params)) / (2 * h)
        assert d[2 + i] == pytest.approx(-grad / (J.capacitance * k ** 2), rel=1e-6)


def test_potential_harmonic_at_half_pi(params):
    phi = np.linspace(-3, 3, 41)
    u = reduced_potential(phi, FluxBias(math.pi / 2, 0.7), params)
    np.testing.assert_allclose(u, 0.5 * params.inductive_energy * phi ** 2, rtol=0, atol=1e-15 * u.max())
    third = np.diff(u, 3)
    assert np.max(np.abs(third)) <= 64 * np.finfo(float).eps * np.max(np.abs(u))


def test_potential_double_well_at_pi(params):
    bias = FluxBias(math.pi, 0.0)
    phi = np.linspace(-4, 4, 10_001)
    u = reduced_potential(phi, bias, params)
    np.testing.assert_allclose(u, u[::-1], rtol=0, atol=1e-13 * np.max(np.abs(u)))
    g = reduced_potential_gradient(phi, bias, params)
    minima = phi[1:][(g[:-1] < 0) & (g[1:] >= 0)]
    assert minima.size == 2
    assert minima[0] == pytest.approx(-minima[1], abs=1e-3)
    assert u[5000] > u[4999]


def _bisect(f, a, b, tol=1e-13):
    fa = f(a)
    while b - a > tol:
        m = 0.5 * (a + b)
        fm = f(m)
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def test_double_well_minimum_matches_bisection(params):
    el, ej = params.inductive_energy, params.josephson_energy
    oracle = _bisect(lambda x: el * x - 2 * ej * math.sin(x), 0.5, math.pi)
    assert double_well_minimum(params) == pytest.approx(oracle, abs=1e-9)
    assert oracle == pytest.approx(2.75, abs=0.05)


@settings(max_examples=100)
@given(st.floats(-4, 4), st.floats(0, 2 * math.pi), st.floats(-1, 1))
def test_potential_gradient_matches_finite_difference(params, phi, pp, pm):
    bias = FluxBias(pp, pm)
    h = 1e-5
    fd = (reduced_potential(phi + h, bias, params) - reduced_potential(phi - h, bias, params)) / (2 * h)
    g = reduced_potential_gradient(phi, bias, params)
    scale = params.inductive_energy * (abs(phi) + 1) + params.josephson_energy
    assert abs(fd - g) <= 1e-6 * scale


def test_beta_l_and_weak_screening_warning(params):
    assert params.beta_l == pytest.approx(7.29, abs=0.01)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        weak = JdpdParams(central_inductance=20e-12)
    assert weak.beta_l < 1 and any("beta_L" in str(w.message) for w in rec)
    with pytest.raises(ValueError):
        double_well_minimum(weak)


def test_asymmetric_junctions_supported():
    p = JdpdParams(junction_2=JunctionParams(critical_current=7e-6))
    assert p.junctions[1].critical_current == 7e-6
