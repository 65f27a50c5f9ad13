import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jdpd_lab.drives import FluxSwitchSpec
from jdpd_lab.fbd import (
    CycleTiming,
    FbdParams,
    PulseTrain,
    TimingError,
    build_pulse_train,
    flux_from_ilfb,
    ilfb_for_flux,
    ilfb_from_pulses,
    set_reset_cycle,
    staircase_profile,
    staircase_switch,
    write_waveform_csv,
)

P = FbdParams()
PHI0 = P.constants.flux_quantum


def test_single_pulse_train():
    assert build_pulse_train(1, 100e-12, t0=3e-10).set_times == (3e-10,)


def test_eight_pulse_span():
    tr = build_pulse_train(8, 100e-12)
    assert tr.set_times[-1] - tr.set_times[0] == pytest.approx(700e-12)


def test_zero_pulses_rejected():
    with pytest.raises(ValueError):
        build_pulse_train(0, 100e-12)


def test_single_step_is_plain_ramp():
    wave = ilfb_from_pulses(build_pulse_train(1, 100e-12, t0=1e-10), P)
    t = np.linspace(0, 5e-10, 101)
    expected = P.target_current * np.clip((t - 1e-10) / P.rise_time, 0, 1)
    np.testing.assert_allclose(wave(t), expected, rtol=1e-12, atol=1e-18)


def test_two_steps_flat_between():
    wave = ilfb_from_pulses(build_pulse_train(2, 200e-12), P)
    t = np.linspace(P.rise_time, 200e-12, 20)
    assert np.ptp(wave(t)) == 0.0
    assert wave(1e-10) == pytest.approx(P.target_current / 2)


@given(st.integers(1, 12), st.floats(60e-12, 1e-9))
def test_staircase_reaches_target(n, interval):
    p = FbdParams(step_interval=interval)
    wave = ilfb_from_pulses(build_pulse_train(n, interval), p)
    t_end = (n - 1) * interval + p.rise_time
    assert float(wave(t_end)) == pytest.approx(p.target_current, rel=1e-12)
    assert float(flux_from_ilfb(wave(t_end), p)) == pytest.approx(2 * math.pi, rel=1e-12)


def test_set_pulses_closer_than_rise_rejected():
    with pytest.raises(TimingError):
        ilfb_from_pulses(build_pulse_train(3, 20e-12), P)


def test_flux_mapping_examples():
    assert flux_from_ilfb(0.0, P) == 0.0
    i = PHI0 / P.mutual_inductance
    assert i == pytest.approx(383e-6, rel=0.001)
    assert float(flux_from_ilfb(i, P)) == pytest.approx(2 * math.pi, rel=1e-15)
    assert ilfb_for_flux(2 * math.pi, P) == pytest.approx(i, rel=1e-15)


@given(st.floats(-1e-3, 1e-3), st.floats(-1e-3, 1e-3), st.floats(-10, 10))
def test_flux_mapping_linear(a, b, c):
    fa, fb = float(flux_from_ilfb(a, P)), float(flux_from_ilfb(b, P))
    assert float(flux_from_ilfb(a + b, P)) == pytest.approx(fa + fb, rel=1e-12, abs=1e-15)
    assert float(flux_from_ilfb(c * a, P)) == pytest.approx(c * fa, rel=1e-12, abs=1e-15)


def test_reset_idempotent():
    train = PulseTrain((0.0,), (1e-9, 2e-9))
    wave = ilfb_from_pulses(train, P)
    t = np.linspace(1.1e-9, 3e-9, 50)
    assert np.all(wave(t) == 0.0)


def test_staircase_down_reset():
    p = FbdParams(reset_mode="staircase-down")
    wave = ilfb_from_pulses(PulseTrain((0.0, 1e-10), (5e-10,)), p)
    assert float(wave(5e-10 + p.rise_time)) == pytest.approx(p.target_current / 2)
    assert float(wave(2e-9)) == 0.0


def test_default_cycle_within_budget():
    wave, phi_plus, duration = set_reset_cycle(P)
    assert duration <= 5e-9
    plateau = wave.currents.max()
    mid = CycleTiming().t0 + P.rise_time + 1e-10
    assert float(phi_plus(mid)) == float(flux_from_ilfb(plateau, P))


def test_cycle_over_budget():
    with pytest.raises(TimingError):
        set_reset_cycle(P, CycleTiming(n_steps=8, hold=4.5e-9))


def test_staircase_profile_and_switch():
    prof = staircase_profile(4, P)
    assert prof[0] == (0.0, 0.0) and prof[-1][1] == 1.0
    base = FluxSwitchSpec(flux_noise_sigma=0.1, flux_noise_hold=5e-12)
    sw = staircase_switch(4, P, base)
    assert sw.flip_duration == pytest.approx(3 * P.step_interval + P.rise_time)
    assert (sw.flux_noise_sigma, sw.flux_noise_hold) == (0.1, 5e-12)
    assert sw.start_level == base.start_level and sw.end_level == base.end_level


def test_waveform_csv(tmp_path):
    wave, _, _ = set_reset_cycle(P)
    path = tmp_path / "w.csv"
    write_waveform_csv(path, wave, P, [0.0, 6e-10, 1e-9])
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t_s", "i_lfb_A", "phi_plus_rad"] and len(rows) == 4
    assert float(rows[3][2]) == float(flux_from_ilfb(float(rows[3][1]), P))


def test_params_validation():
    with pytest.raises(ValueError):
        FbdParams(mutual_inductance=0.0)
    with pytest.raises(ValueError):
        FbdParams(reset_mode="never")
