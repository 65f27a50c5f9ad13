"""Behavioral model of the SFQ flux bias driver (FBD).

Each SFQ set pulse adds one quantized increment to the current in the LFB
coupling inductor, with a finite rise time; a reset pulse returns it to zero.
The coupling to the detector is the linear mutual-inductance law
``phi_+ = 2 pi M I_LFB / Phi0``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from jdpd_lab._io import fmt
from jdpd_lab.circuit import PhysicalConstants
from jdpd_lab.drives import FluxSwitchSpec


class TimingError(ValueError):
    pass


@dataclass(frozen=True)
class FbdParams:
    """FBD coupling and staircase parameters.

    ``current_per_pulse=None`` splits the target current evenly over the steps.
    """

    mutual_inductance: float = 5.4e-12
    current_per_pulse: float | None = None
    target_flux: float = 2.0 * math.pi
    reset_mode: Literal["instant", "staircase-down"] = "instant"
    rise_time: float = 50e-12
    step_interval: float = 100e-12
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)

    def __post_init__(self):
        if not self.mutual_inductance > 0:
            raise ValueError("mutual_inductance must be > 0")
        if self.current_per_pulse is not None and not self.current_per_pulse > 0:
            raise ValueError("current_per_pulse must be > 0")
        if not self.target_flux > 0:
            raise ValueError("target_flux must be > 0")
        if not self.rise_time > 0 or not self.step_interval > 0:
            raise ValueError("rise_time and step_interval must be > 0")
        if self.reset_mode not in ("instant", "staircase-down"):
            raise ValueError(f"unknown reset_mode {self.reset_mode!r}")

    @property
    def target_current(self) -> float:
        return ilfb_for_flux(self.target_flux, self)

    def step_current(self, n_steps: int) -> float:
        return self.target_current / n_steps if self.current_per_pulse is None else self.current_per_pulse


@dataclass(frozen=True)
class PulseTrain:
    set_times: tuple[float, ...]
    reset_times: tuple[float, ...] = ()

    def __post_init__(self):
        for name in ("set_times", "reset_times"):
            ts = getattr(self, name)
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValueError(f"{name} must be strictly increasing")
        if self.reset_times and (not self.set_times or self.reset_times[0] <= self.set_times[0]):
            raise ValueError("a reset must follow at least one set pulse")


@dataclass(frozen=True)
class LfbWaveform:
    """Piecewise-linear I_LFB(t) through ``breakpoints`` [(t, I), ...]; constant outside."""

    breakpoints: tuple[tuple[float, float], ...]
    rise_time: float

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.breakpoints])

    @property
    def currents(self) -> np.ndarray:
        return np.array([i for _, i in self.breakpoints])

    def __call__(self, t):
        return np.interp(t, self.times, self.currents)


def build_pulse_train(n_steps: int, step_interval: float, t0: float = 0.0,
                      reset_delay: float | None = None) -> PulseTrain:
    """``n_steps`` set pulses at ``t0 + k step_interval`` and one reset ``reset_delay`` after the last."""
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if not step_interval > 0:
        raise ValueError("step_interval must be > 0")
    sets = tuple(t0 + k * step_interval for k in range(n_steps))
    if reset_delay is None:
        return PulseTrain(sets)
    return PulseTrain(sets, (sets[-1] + reset_delay,))


def ilfb_from_pulses(train: PulseTrain, p: FbdParams) -> LfbWaveform:
    """Quantized staircase: every set pulse ramps I_LFB up by one increment over ``rise_time``."""
    n = len(train.set_times)
    if n == 0:
        raise ValueError("pulse train has no set pulses")
    di = p.step_current(n)
    rise = p.rise_time
    for a, b in zip(train.set_times, train.set_times[1:]):
        if b - a < rise:
            raise TimingError("set pulses closer than the rise time")
    bp = [(train.set_times[0], 0.0)]
    level = 0.0
    for ts in train.set_times:
        if ts > bp[-1][0]:
            bp.append((ts, level))
        level += di
        bp.append((ts + rise, level))
    for tr in train.reset_times:
        if tr < bp[-1][0]:
            raise TimingError("reset arrives before the last step has risen")
        bp.append((tr, level))
        if p.reset_mode == "instant":
            bp.append((tr + rise, 0.0))
        else:
            t = tr
            while level > 1e-12 * di:
                level = max(0.0, level - di)
                bp.append((t + rise, level))
                t += p.step_interval
        level = 0.0
    return LfbWaveform(tuple(bp), rise)


def flux_from_ilfb(i, p: FbdParams):
    """phi_+ = 2 pi M I / Phi0."""
    return 2.0 * math.pi * p.mutual_inductance * np.asarray(i, dtype=float) / p.constants.flux_quantum


def ilfb_for_flux(phi: float, p: FbdParams) -> float:
    return phi * p.constants.flux_quantum / (2.0 * math.pi * p.mutual_inductance)


def staircase_profile(n_steps: int, p: FbdParams) -> tuple[tuple[float, float], ...]:
    """Normalized (time offset, swing fraction) breakpoints of an n-step staircase.

    The staircase is rescaled so its final plateau maps to the switch end level.
    """
    wave = ilfb_from_pulses(build_pulse_train(n_steps, p.step_interval), p)
    t0 = wave.breakpoints[0][0]
    top = wave.currents.max()
    return tuple((t - t0, i / top) for t, i in wave.breakpoints)


def staircase_switch(n_steps: int, p: FbdParams, base: FluxSwitchSpec | None = None) -> FluxSwitchSpec:
    """Flux switch whose swing follows the FBD staircase from the detector's start to end level."""
    base = base or FluxSwitchSpec()
    prof = staircase_profile(n_steps, p)
    return FluxSwitchSpec(start_level=base.start_level, end_level=base.end_level,
                          switch_time=base.switch_time, flip_duration=prof[-1][0],
                          ramp_shape=base.ramp_shape, flux_noise_sigma=base.flux_noise_sigma,
                          flux_noise_hold=base.flux_noise_hold, flux_noise_gate=base.flux_noise_gate,
                          profile=prof)


@dataclass(frozen=True)
class CycleTiming:
    n_steps: int = 1
    t0: float = 0.5e-9
    hold: float = 2e-9
    budget: float = 5e-9


def set_reset_cycle(p: FbdParams, timing: CycleTiming = CycleTiming()):
    """Full set/reset cycle: returns (LfbWaveform, phi_plus(t) callable, cycle duration)."""
    train = build_pulse_train(timing.n_steps, p.step_interval, timing.t0,
                              reset_delay=p.rise_time + timing.hold)
    wave = ilfb_from_pulses(train, p)
    duration = wave.breakpoints[-1][0] - wave.breakpoints[0][0]
    if duration > timing.budget:
        raise TimingError(f"set/reset cycle takes {duration:.3g} s, budget {timing.budget:.3g} s")

    def phi_plus(t):
        return flux_from_ilfb(wave(t), p)

    return wave, phi_plus, duration


def write_waveform_csv(path, wave: LfbWaveform, p: FbdParams, times) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "i_lfb_A", "phi_plus_rad"])
        for t in times:
            i = float(wave(t))
            w.writerow([fmt(t), fmt(i), fmt(flux_from_ilfb(i, p))])
