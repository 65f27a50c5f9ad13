"""Time-domain drives: stimulus tone, flux switch waveform and thermal noise."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

MIN_STIMULUS_DURATION = 2e-9
FLIP_DURATION_FACTOR = 4.0
ENVELOPE_FRACTION = 1.0 / 6.0


class ConfigurationError(ValueError):
    """Inconsistent drive configuration."""


@dataclass(frozen=True)
class StimulusSpec:
    """Gaussian-enveloped tone ``A exp(-(t-t_c)^2 / 2 s^2) sin(2 pi f t + phi_x)`` on [0, duration].

    ``envelope_sigma=None`` means ``duration / 6``.
    """

    amplitude: float = 0.35e-6
    frequency: float = 7.5e9
    phase_offset: float = 0.0
    duration: float = MIN_STIMULUS_DURATION
    envelope_sigma: float | None = None

    def __post_init__(self):
        if not self.amplitude >= 0:
            raise ConfigurationError(f"stimulus amplitude must be >= 0, got {self.amplitude!r}")
        for name in ("frequency", "duration"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"stimulus {name} must be > 0, got {getattr(self, name)!r}")
        if self.envelope_sigma is not None and not self.envelope_sigma > 0:
            raise ConfigurationError(f"envelope_sigma must be > 0, got {self.envelope_sigma!r}")

    @property
    def center(self) -> float:
        return 0.5 * self.duration

    @property
    def envelope_width(self) -> float:
        return self.duration * ENVELOPE_FRACTION if self.envelope_sigma is None else self.envelope_sigma


def stimulus_duration_for_flip(flip_duration: float) -> float:
    return max(MIN_STIMULUS_DURATION, FLIP_DURATION_FACTOR * flip_duration)


def stimulus_envelope(t, spec: StimulusSpec):
    t = np.asarray(t, dtype=float)
    env = np.exp(-np.square(t - spec.center) / (2.0 * spec.envelope_width ** 2))
    return np.where((t >= 0.0) & (t <= spec.duration), spec.amplitude * env, 0.0)


def stimulus_at(t, spec: StimulusSpec):
    """Stimulus current at time(s) ``t``; zero outside the stimulus window."""
    t = np.asarray(t, dtype=float)
    out = stimulus_envelope(t, spec) * np.sin(2.0 * math.pi * spec.frequency * t + spec.phase_offset)
    return float(out) if out.ndim == 0 else out


RampShape = Literal["linear", "smoothstep"]


@dataclass(frozen=True)
class FluxSwitchSpec:
    """Flux switch of phi_+ from ``start_level`` to ``end_level``.

    ``profile`` optionally replaces the single ramp by piecewise segments given as
    ``(time offset from switch_time, fraction of the swing)`` breakpoints; it must
    start at ``(0, 0)`` and end at ``(flip_duration, 1)``.  ``ramp_shape`` applies
    to every rising segment.

    Flux noise of standard deviation ``flux_noise_sigma`` rides on the switch
    pulse: with ``flux_noise_gate="switch"`` it is scaled by the swing fraction
    (no noise in the ready state, full noise on the plateau); ``"always"`` adds
    it throughout.  In a simulation each sample is held for ``flux_noise_hold``
    seconds (values <= dt mean a fresh sample every step).
    """

    start_level: float = math.pi / 2
    end_level: float = math.pi
    switch_time: float = 0.0
    flip_duration: float = 100e-12
    ramp_shape: RampShape = "linear"
    flux_noise_sigma: float = 0.0
    flux_noise_hold: float = 10e-12
    flux_noise_gate: Literal["switch", "always"] = "switch"
    profile: tuple[tuple[float, float], ...] | None = field(default=None)

    def __post_init__(self):
        if not self.flip_duration > 0:
            raise ConfigurationError(f"flip_duration must be > 0, got {self.flip_duration!r}")
        if not self.start_level < self.end_level:
            raise ConfigurationError("flux switch requires start_level < end_level")
        if not self.flux_noise_sigma >= 0:
            raise ConfigurationError(f"flux_noise_sigma must be >= 0, got {self.flux_noise_sigma!r}")
        if not self.flux_noise_hold >= 0:
            raise ConfigurationError(f"flux_noise_hold must be >= 0, got {self.flux_noise_hold!r}")
        if self.flux_noise_gate not in ("switch", "always"):
            raise ConfigurationError(f"unknown flux_noise_gate {self.flux_noise_gate!r}")
        if self.ramp_shape not in ("linear", "smoothstep"):
            raise ConfigurationError(f"unknown ramp_shape {self.ramp_shape!r}")
        if self.profile is not None:
            prof = tuple((float(a), float(b)) for a, b in self.profile)
            object.__setattr__(self, "profile", prof)
            times = [a for a, _ in prof]
            fracs = [b for _, b in prof]
            if len(prof) < 2 or times[0] != 0.0 or fracs[0] != 0.0 or fracs[-1] != 1.0:
                raise ConfigurationError("profile must run from (0, 0) to (flip_duration, 1)")
            if not math.isclose(times[-1], self.flip_duration, rel_tol=1e-12):
                raise ConfigurationError("profile end time must equal flip_duration")
            if any(b < a for a, b in zip(times, times[1:])) or any(b < a for a, b in zip(fracs, fracs[1:])):
                raise ConfigurationError("profile must be nondecreasing in time and fraction")

    @property
    def breakpoints(self) -> tuple[tuple[float, float], ...]:
        return self.profile if self.profile is not None else ((0.0, 0.0), (self.flip_duration, 1.0))

    @property
    def midpoint(self) -> float:
        return self.switch_time + 0.5 * self.flip_duration


def _shape(u, ramp_shape):
    if ramp_shape == "smoothstep":
        return u * u * (3.0 - 2.0 * u)
    return u


def switch_fraction(t, spec: FluxSwitchSpec):
    """Noiseless swing fraction in [0, 1] at time(s) ``t``."""
    t = np.asarray(t, dtype=float)
    rel = t - spec.switch_time
    out = np.zeros_like(rel)
    bp = spec.breakpoints
    for (t0, f0), (t1, f1) in zip(bp, bp[1:]):
        if t1 > t0:
            u = np.clip((rel - t0) / (t1 - t0), 0.0, 1.0)
            seg = f0 + (f1 - f0) * _shape(u, spec.ramp_shape)
            out = np.where(rel >= t0, seg, out)
        else:
            out = np.where(rel >= t0, f1, out)
    return out


def flux_noise_gate(t, spec: FluxSwitchSpec):
    """Multiplier of the flux-noise standard deviation at time(s) ``t``."""
    t = np.asarray(t, dtype=float)
    if spec.flux_noise_gate == "always":
        return np.ones_like(t)
    return switch_fraction(t, spec)


def flux_switch_at(t, spec: FluxSwitchSpec, rng: np.random.Generator | None = None):
    """phi_+ at time(s) ``t``; with ``rng`` and nonzero flux noise, adds an independent
    Gaussian sample per time point."""
    t = np.asarray(t, dtype=float)
    out = spec.start_level + (spec.end_level - spec.start_level) * switch_fraction(t, spec)
    if rng is not None and spec.flux_noise_sigma > 0:
        out = out + spec.flux_noise_sigma * flux_noise_gate(t, spec) * rng.standard_normal(out.shape)
    return float(out) if out.ndim == 0 else out


def align_switch_to_stimulus(stim: StimulusSpec, sw: FluxSwitchSpec) -> FluxSwitchSpec:
    """Place the switch so its midpoint coincides with the stimulus centre."""
    if sw.flip_duration > stim.duration:
        raise ConfigurationError(
            f"flip_duration {sw.flip_duration:.3g} s exceeds stimulus duration {stim.duration:.3g} s")
    return replace(sw, switch_time=stim.center - 0.5 * sw.flip_duration)


def filter_coefficient(cutoff: float, dt: float) -> float:
    """Exact one-pole update weight 1 - exp(-cutoff dt)."""
    return -math.expm1(-cutoff * dt)


@dataclass
class NoiseChannel:
    """Gaussian current noise low-pass filtered at ``cutoff`` (rad/s)."""

    sigma: float
    cutoff: float
    rng: np.random.Generator
    filter_state: float = 0.0

    def sample(self, dt: float) -> float:
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt!r}")
        x = self.sigma * self.rng.standard_normal()
        self.filter_state += filter_coefficient(self.cutoff, dt) * (x - self.filter_state)
        return self.filter_state


def sample_noise(channel: NoiseChannel, dt: float) -> float:
    return channel.sample(dt)


def filter_noise(raw, cutoff: float, dt: float, state: float = 0.0) -> np.ndarray:
    """Apply the one-pole update to a whole sequence of raw samples."""
    from scipy.signal import lfilter

    w = filter_coefficient(cutoff, dt)
    raw = np.asarray(raw, dtype=float)
    y, _ = lfilter([w], [1.0, -(1.0 - w)], raw, zi=[(1.0 - w) * state])
    return y


def run_noise_streams(run_seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Independent generators for junction 1, junction 2 and flux noise of one run."""
    children = np.random.SeedSequence(run_seed).spawn(3)
    return tuple(np.random.Generator(np.random.PCG64(c)) for c in children)


def derive_seed(seed: int, *index: int) -> int:
    """64-bit child seed for (seed, index...) by SeedSequence spawn-key derivation."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(i) for i in index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
