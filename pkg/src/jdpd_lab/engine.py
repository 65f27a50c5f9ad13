"""Fixed-step stochastic integration of the JDPD, well classification and Monte Carlo."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from jdpd_lab import _kernel
from jdpd_lab._io import fmt
from jdpd_lab.circuit import (
    CircuitState,
    JdpdParams,
    branch_currents,
    crossover_temperature,
    double_well_minimum,
    mechanical_rhs,
    plasma_frequency,
    thermal_noise_sigma,
)
from jdpd_lab.drives import (
    FluxSwitchSpec,
    StimulusSpec,
    align_switch_to_stimulus,
    derive_seed,
    filter_coefficient,
    flux_noise_gate,
    flux_switch_at,
    run_noise_streams,
    stimulus_at,
    stimulus_duration_for_flip,
    stimulus_envelope,
)

SUBSTEPS = 8
# Raw noise buffers per batch are capped at roughly this many float64 values.
BATCH_VALUES = 12_000_000
TAIL_FRACTION = 0.25
ESCAPE_FRACTION = 0.5
AMBIGUITY_FRACTION = 0.1


class IntegrationError(RuntimeError):
    def __init__(self, t: float, variable: str, message: str | None = None):
        self.t = t
        self.variable = variable
        super().__init__(message or f"non-finite {variable} at t = {t:.6g} s")


class AmbiguousOutcomeError(ValueError):
    """The detector phase did not settle into either well."""


class EstimationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimulationConfig:
    params: JdpdParams = field(default_factory=JdpdParams)
    stimulus: StimulusSpec = field(default_factory=StimulusSpec)
    flux_switch: FluxSwitchSpec = field(default_factory=FluxSwitchSpec)
    dt: float = 1e-12
    noise_temperature: float | None = None
    seed: int = 0
    settle_time: float = 2e-9
    record_trajectory: bool = False
    align_switch: bool = True
    phi_minus: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt!r}")
        if not self.settle_time > 0:
            raise ValueError(f"settle_time must be > 0, got {self.settle_time!r}")
        if self.noise_temperature is not None and self.noise_temperature < 0:
            raise ValueError(f"noise_temperature must be >= 0, got {self.noise_temperature!r}")

    @property
    def omega_p(self) -> float:
        return max(plasma_frequency(j, self.params.constants) for j in self.params.junctions)

    @property
    def temperature(self) -> float:
        """Noise temperature; defaults to the quantum/classical crossover temperature."""
        if self.noise_temperature is not None:
            return self.noise_temperature
        return crossover_temperature(self.omega_p, self.params.constants)

    @property
    def substeps(self) -> int:
        f_p = self.omega_p / (2.0 * math.pi)
        return SUBSTEPS if self.dt > 1.0 / (10.0 * f_p) else 1

    @property
    def stimulus_steps(self) -> int:
        return int(round(self.stimulus.duration / self.dt))

    @property
    def settle_steps(self) -> int:
        return max(1, int(round(self.settle_time / self.dt)))

    @property
    def n_steps(self) -> int:
        return self.stimulus_steps + self.settle_steps

    def resolved(self) -> "SimulationConfig":
        """Config with the switch aligned to the stimulus and the temperature made explicit."""
        sw = align_switch_to_stimulus(self.stimulus, self.flux_switch) if self.align_switch else self.flux_switch
        return replace(self, flux_switch=sw, noise_temperature=self.temperature, align_switch=False)


def config_for_flip(flip_duration: float, base: SimulationConfig | None = None, **switch) -> SimulationConfig:
    """Config whose stimulus window is sized for ``flip_duration`` (max(2 ns, 4 flip))."""
    base = base or SimulationConfig()
    sw = replace(base.flux_switch, flip_duration=flip_duration, profile=None, **switch)
    stim = replace(base.stimulus, duration=stimulus_duration_for_flip(flip_duration))
    return replace(base, stimulus=stim, flux_switch=sw)


@dataclass
class Trajectory:
    times: np.ndarray
    phi: np.ndarray
    i_l: np.ndarray
    delta_1: np.ndarray
    delta_2: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "phi_rad", "i_l_A", "delta1_rad", "delta2_rad"])
            for row in zip(self.times, self.phi, self.i_l, self.delta_1, self.delta_2):
                w.writerow([fmt(v) for v in row])


@dataclass(frozen=True)
class Outcome:
    state_bit: int
    final_phi: float
    escaped: bool
    run_seed: int


@dataclass(frozen=True)
class StepDrives:
    """Noise held constant over one step: filtered junction currents and the flux sample."""

    i_noise_1: float = 0.0
    i_noise_2: float = 0.0
    flux_noise: float = 0.0


@dataclass(frozen=True)
class DetectionEstimate:
    p_hat: float
    n_one: int
    n_valid: int
    n_ambiguous: int
    ci_low: float
    ci_high: float
    n_reps: int


def wilson_interval(count: int, nobs: int, alpha: float = 0.05) -> tuple[float, float]:
    from statsmodels.stats.proportion import proportion_confint

    lo, hi = proportion_confint(count, nobs, alpha=alpha, method="wilson")
    return float(lo), float(hi)


def _param_vector(p: JdpdParams) -> tuple:
    j1, j2 = p.junctions
    return (p.central_inductance, p.loop_inductance_1, p.loop_inductance_2,
            j1.critical_current, j2.critical_current, j1.shunt_resistance, j2.shunt_resistance,
            j1.capacitance, j2.capacitance, p.constants.reduced_flux_quantum)


def step(state: CircuitState, t: float, cfg: SimulationConfig, drives: StepDrives = StepDrives()) -> CircuitState:
    """Advance ``state`` from ``t`` to ``t + cfg.dt`` with classical RK4 (sub-stepped if needed).

    Reference implementation in plain numpy; ``cfg.flux_switch`` is used as given
    (call ``cfg.resolved()`` first to align it with the stimulus).
    """
    p = cfg.params
    nsub = cfg.substeps
    h = cfg.dt / nsub
    sw = cfg.flux_switch
    phi_m = cfg.phi_minus

    def rhs(y, tt):
        phi_p = flux_switch_at(tt, sw) + drives.flux_noise
        return mechanical_rhs(y, phi_p + phi_m, phi_p - phi_m, stimulus_at(tt, cfg.stimulus),
                              drives.i_noise_1, drives.i_noise_2, p)

    y = state.mechanical()
    for m in range(nsub):
        tt = t + m * h
        k1 = rhs(y, tt)
        k2 = rhs(y + 0.5 * h * k1, tt + 0.5 * h)
        k3 = rhs(y + 0.5 * h * k2, tt + 0.5 * h)
        k4 = rhs(y + h * k3, tt + h)
        y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    for name, value in zip(("delta_1", "delta_2", "ddelta_1", "ddelta_2"), y):
        if not math.isfinite(value):
            raise IntegrationError(t + cfg.dt, name)
    return CircuitState.from_mechanical(y, (drives.i_noise_1, drives.i_noise_2))


@dataclass(frozen=True)
class _DrivePlan:
    phip: np.ndarray
    drv_s: np.ndarray
    drv_c: np.ndarray
    nsub: int
    n_steps: int
    rec_start: int
    sigma: tuple[float, float]
    weight: float
    sigma_phi: float
    flux_gate: np.ndarray
    hold_steps: int

    @property
    def noisy(self) -> bool:
        return self.sigma[0] > 0 or self.sigma[1] > 0 or self.sigma_phi > 0


def _plan(cfg: SimulationConfig) -> _DrivePlan:
    """Sample the deterministic drives of a resolved config on the half-substep grid."""
    nsub = cfg.substeps
    n_steps = cfg.n_steps
    t = np.arange(2 * nsub * n_steps + 1) * (cfg.dt / (2 * nsub))
    phip = np.asarray(flux_switch_at(t, cfg.flux_switch), dtype=float)
    env = stimulus_envelope(t, cfg.stimulus)
    wt = 2.0 * math.pi * cfg.stimulus.frequency * t
    T = cfg.temperature
    sigma = tuple(thermal_noise_sigma(j, T, cfg.dt, cfg.params.constants) for j in cfg.params.junctions)
    sw = cfg.flux_switch
    gate = flux_noise_gate(np.arange(n_steps) * cfg.dt, sw)
    hold = max(1, int(round(sw.flux_noise_hold / cfg.dt)))
    return _DrivePlan(phip, env * np.sin(wt), env * np.cos(wt), nsub, n_steps, cfg.stimulus_steps,
                      sigma, filter_coefficient(cfg.omega_p, cfg.dt), sw.flux_noise_sigma, gate, hold)


def relax(p: JdpdParams, y0, phi_plus: float, phi_minus: float = 0.0, duration: float = 3e-9,
          dt: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Noiseless, undriven evolution at static flux from the mechanical state ``y0``.

    Returns the final [d1, d2, v1, v2] and the per-step record of [phi_A, d1, d2].
    """
    nsub = SimulationConfig(params=p, dt=dt).substeps
    n = int(round(duration / dt))
    grid = np.full(2 * nsub * n + 1, float(phi_plus))
    zeros = np.zeros_like(grid)
    y = np.zeros(6)
    y[:4] = y0
    dummy = np.zeros(1)
    traj = np.zeros((n + 1, 3))
    status, j = _kernel.integrate_trajectory(
        y, grid, phi_minus, zeros, zeros, 0.0, 0.0, dummy, dummy, dummy, 0.0, 0.0, 0.0, 0.0, False,
        nsub, dt, _param_vector(p), n, dummy, traj)
    if status != _kernel.STATUS_OK:
        raise IntegrationError((j + 1) * dt, "relaxation")
    return y[:4].copy(), traj


@lru_cache(maxsize=64)
def equilibrium(p: JdpdParams, phi_plus: float, phi_minus: float = 0.0, dt: float = 1e-12) -> tuple:
    """Rest state [d1, d2, 0, 0] at static flux, by damped noiseless relaxation and a Newton polish."""
    from scipy.optimize import fsolve

    y, _ = relax(p, np.zeros(4), phi_plus, phi_minus, 3e-9, dt)
    j1, j2 = p.junctions
    phi_1, phi_2 = phi_plus + phi_minus, phi_plus - phi_minus

    def residual(d):
        _, i1, i2 = branch_currents(np.array([d[0], d[1], 0.0, 0.0]), phi_1, phi_2, 0.0, p)
        return [(i1 - j1.critical_current * math.sin(d[0])) / j1.critical_current,
                (i2 - j2.critical_current * math.sin(d[1])) / j2.critical_current]

    d = fsolve(residual, y[:2], xtol=1e-13)
    return (float(d[0]), float(d[1]), 0.0, 0.0)


def _set_threads(threads: int | None) -> None:
    import numba

    if threads is None:
        env = os.environ.get("JDPD_LAB_THREADS")
        threads = int(env) if env else None
    if threads is not None:
        numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))


def _noise_block(plan: _DrivePlan, seeds) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = len(seeds)
    raw = np.empty((3, n, plan.n_steps))
    for r, s in enumerate(seeds):
        g1, g2, gf = run_noise_streams(s)
        raw[0, r] = g1.standard_normal(plan.n_steps)
        raw[1, r] = g2.standard_normal(plan.n_steps)
        if plan.sigma_phi > 0:
            n_held = -(-plan.n_steps // plan.hold_steps)
            raw[2, r] = np.repeat(gf.standard_normal(n_held), plan.hold_steps)[:plan.n_steps] * plan.flux_gate
        else:
            raw[2, r] = 0.0
    return raw[0], raw[1], raw[2]


def integrate_runs(cfg: SimulationConfig, phase_offsets, run_seeds, threads: int | None = None) -> np.ndarray:
    """Settle-window node phase for each (phase offset, seed) run of a common config.

    Returns an array of shape (n_runs, settle_steps).  Raises IntegrationError on
    the first run that produced a non-finite state.
    """
    cfg = cfg.resolved()
    plan = _plan(cfg)
    y0 = np.array(equilibrium(cfg.params, cfg.flux_switch.start_level, cfg.phi_minus, cfg.dt) + (0.0, 0.0))
    phase_offsets = np.asarray(phase_offsets, dtype=float)
    run_seeds = list(run_seeds)
    n = len(run_seeds)
    if phase_offsets.shape != (n,):
        raise ValueError("phase_offsets and run_seeds must have equal length")
    _set_threads(threads)
    out = np.empty((n, plan.n_steps - plan.rec_start))
    batch = max(1, BATCH_VALUES // (3 * plan.n_steps)) if plan.noisy else n
    P = _param_vector(cfg.params)
    for lo in range(0, n, batch):
        hi = min(n, lo + batch)
        if plan.noisy:
            raw1, raw2, rawf = _noise_block(plan, run_seeds[lo:hi])
        else:
            raw1 = raw2 = rawf = np.zeros((1, 1))
        final = np.zeros((hi - lo, 6))
        status = np.zeros(hi - lo, dtype=np.int64)
        fail = np.zeros(hi - lo, dtype=np.int64)
        _kernel.integrate_batch(
            y0, plan.phip, cfg.phi_minus, plan.drv_s, plan.drv_c,
            np.cos(phase_offsets[lo:hi]), np.sin(phase_offsets[lo:hi]), raw1, raw2, rawf,
            plan.sigma[0], plan.sigma[1], plan.weight, plan.sigma_phi, plan.noisy, plan.nsub, cfg.dt, P,
            plan.rec_start, out[lo:hi], final, status, fail)
        bad = np.flatnonzero(status != _kernel.STATUS_OK)
        if bad.size:
            r = bad[0]
            names = ("delta_1", "delta_2", "ddelta_1", "ddelta_2")
            var = next((nm for nm, v in zip(names, final[r, :4]) if not math.isfinite(v)), "state")
            raise IntegrationError((fail[r] + 1) * cfg.dt, var,
                                   f"non-finite {var} at t = {(fail[r] + 1) * cfg.dt:.6g} s (run seed {run_seeds[lo + r]})")
    return out


def classify_well(tail, phi_star: float, run_seed: int = 0) -> Outcome:
    """Classify a settle-window node-phase record into well 0 (left) or 1 (right)."""
    tail = np.asarray(tail, dtype=float)
    if tail.size == 0:
        raise ValueError("settle window is empty")
    n_avg = max(1, int(math.ceil(TAIL_FRACTION * tail.size)))
    final_phi = float(np.mean(tail[-n_avg:]))
    if abs(final_phi) < AMBIGUITY_FRACTION * phi_star:
        raise AmbiguousOutcomeError(f"phase did not settle: tail mean {final_phi:.3g} rad")
    escaped = False
    big = np.flatnonzero(np.abs(tail) > ESCAPE_FRACTION * phi_star)
    if big.size:
        after = np.sign(tail[big[0]:])
        escaped = bool(np.any(after == -after[0]))
    return Outcome(int(final_phi > 0), final_phi, escaped, int(run_seed))


def simulate(cfg: SimulationConfig) -> tuple[Outcome, Trajectory | None]:
    """One run of the detection protocol: ready state, stimulus with switch, sensing."""
    cfg = cfg.resolved()
    phi_star = double_well_minimum(cfg.params)
    if not cfg.record_trajectory:
        tail = integrate_runs(cfg, [cfg.stimulus.phase_offset], [cfg.seed])[0]
        return classify_well(tail, phi_star, cfg.seed), None

    plan = _plan(cfg)
    y = np.array(equilibrium(cfg.params, cfg.flux_switch.start_level, cfg.phi_minus, cfg.dt) + (0.0, 0.0))
    if plan.noisy:
        raw1, raw2, rawf = (a[0] for a in _noise_block(plan, [cfg.seed]))
    else:
        raw1 = raw2 = rawf = np.zeros(1)
    traj = np.empty((plan.n_steps + 1, 3))
    tail = np.empty(plan.n_steps - plan.rec_start)
    phx = cfg.stimulus.phase_offset
    status, j = _kernel.integrate_trajectory(
        y, plan.phip, cfg.phi_minus, plan.drv_s, plan.drv_c, math.cos(phx), math.sin(phx),
        raw1, raw2, rawf, plan.sigma[0], plan.sigma[1], plan.weight, plan.sigma_phi, plan.noisy,
        plan.nsub, cfg.dt, _param_vector(cfg.params), plan.rec_start, tail, traj)
    if status != _kernel.STATUS_OK:
        raise IntegrationError((j + 1) * cfg.dt, "state")
    times = np.arange(plan.n_steps + 1) * cfg.dt
    k = cfg.params.constants.reduced_flux_quantum
    trajectory = Trajectory(times, traj[:, 0].copy(), k * traj[:, 0] / cfg.params.central_inductance,
                            traj[:, 1].copy(), traj[:, 2].copy())
    return classify_well(tail, phi_star, cfg.seed), trajectory


def summarize(tails, run_seeds, phi_star: float) -> DetectionEstimate:
    ones = valid = ambiguous = 0
    for tail, s in zip(tails, run_seeds):
        try:
            outcome = classify_well(tail, phi_star, s)
        except AmbiguousOutcomeError:
            ambiguous += 1
            continue
        valid += 1
        ones += outcome.state_bit
    if valid == 0:
        raise EstimationError(f"all {ambiguous} repetitions were ambiguous")
    lo, hi = wilson_interval(ones, valid)
    return DetectionEstimate(ones / valid, ones, valid, ambiguous, lo, hi, len(run_seeds))


def rep_seeds(seed: int, n_reps: int) -> list[int]:
    return [derive_seed(seed, i) for i in range(n_reps)]


def monte_carlo(cfg: SimulationConfig, n_reps: int, threads: int | None = None) -> DetectionEstimate:
    """Estimate P(state 1) from ``n_reps`` runs seeded by (cfg.seed, rep index)."""
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    seeds = rep_seeds(cfg.seed, n_reps)
    tails = integrate_runs(cfg, np.full(n_reps, cfg.stimulus.phase_offset), seeds, threads)
    return summarize(tails, seeds, double_well_minimum(cfg.params))
