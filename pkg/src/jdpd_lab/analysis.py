"""Detection-probability curves, gray-zone fits and the parameter sweeps."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import least_squares
from scipy.special import erf

from jdpd_lab._io import fmt
from jdpd_lab.drives import derive_seed, stimulus_duration_for_flip
from jdpd_lab.engine import (
    DetectionEstimate,
    EstimationError,
    IntegrationError,
    SimulationConfig,
    config_for_flip,
    monte_carlo,
)
from jdpd_lab.fbd import FbdParams, staircase_switch

log = logging.getLogger(__name__)

GRAY_ZONE_CAP = math.pi / 2
DEFAULT_FLIPS = tuple(np.geomspace(10e-12, 5e-9, 12))
DEFAULT_FLUX_SIGMAS = tuple(np.linspace(0.0, 0.57, 10))
DEFAULT_STEPS = tuple(range(1, 9))

Estimator = Callable[[SimulationConfig, int], DetectionEstimate]


class FitError(RuntimeError):
    pass


@dataclass
class DetectionCurve:
    phases: np.ndarray
    p_hat: np.ndarray
    n_valid: np.ndarray
    n_ambiguous: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    seeds: list[int] = field(default_factory=list)
    errors: dict[int, str] = field(default_factory=dict)

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.p_hat) & (self.n_valid > 0)

    @classmethod
    def from_probabilities(cls, phases, p, n: int = 500) -> "DetectionCurve":
        """Curve from exact probabilities; counts are nominal (used for synthetic data)."""
        phases = np.asarray(phases, dtype=float)
        p = np.asarray(p, dtype=float)
        nv = np.full(p.shape, n)
        return cls(phases, p, nv, np.zeros_like(nv), p.copy(), p.copy())

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["phase_rad", "p_hat", "n_valid", "n_ambiguous", "ci_low", "ci_high", "seed"])
            for k in range(len(self.phases)):
                seed = self.seeds[k] if k < len(self.seeds) else ""
                w.writerow([fmt(self.phases[k]), fmt(self.p_hat[k]), int(self.n_valid[k]),
                            int(self.n_ambiguous[k]), fmt(self.ci_low[k]), fmt(self.ci_high[k]), seed])


@dataclass(frozen=True)
class GrayZoneFit:
    delta_phi: float
    phi_t: float
    residual_norm: float
    capped: bool


@dataclass
class SweepResult:
    name: str
    control_values: np.ndarray
    fidelity: np.ndarray
    gray_zone: np.ndarray
    capped: np.ndarray
    phi_t: np.ndarray
    curves: list[DetectionCurve]
    errors: dict[int, str] = field(default_factory=dict)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["control", "fidelity", "gray_zone_rad", "capped", "phi_t_rad",
                        "min_p", "max_p", "failed_phase_points"])
            for k, c in enumerate(self.curves):
                v = c.valid
                lo = float(np.min(c.p_hat[v])) if v.any() else math.nan
                hi = float(np.max(c.p_hat[v])) if v.any() else math.nan
                w.writerow([fmt(self.control_values[k]), fmt(self.fidelity[k]), fmt(self.gray_zone[k]),
                            int(bool(self.capped[k])), fmt(self.phi_t[k]), fmt(lo), fmt(hi),
                            int(len(c.errors))])


def default_phases(n_phases: int = 15) -> np.ndarray:
    return np.linspace(0.0, 2.0 * math.pi, n_phases)


def phase_sweep(base_cfg: SimulationConfig, n_phases: int = 15, n_reps: int = 500,
                threads: int | None = None, estimator: Estimator | None = None) -> DetectionCurve:
    """Detection probability at ``n_phases`` tone phases spread uniformly over [0, 2 pi]."""
    if n_phases < 3:
        raise ValueError("n_phases must be >= 3")
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    if estimator is None:
        def estimator(cfg, n):
            return monte_carlo(cfg, n, threads=threads)

    phases = default_phases(n_phases)
    cols = {k: np.full(n_phases, math.nan) for k in ("p", "lo", "hi")}
    n_valid = np.zeros(n_phases, dtype=int)
    n_amb = np.zeros(n_phases, dtype=int)
    seeds, errors = [], {}
    for k, phx in enumerate(phases):
        seed = derive_seed(base_cfg.seed, k)
        seeds.append(seed)
        cfg = replace(base_cfg, seed=seed, stimulus=replace(base_cfg.stimulus, phase_offset=float(phx)))
        try:
            est = estimator(cfg, n_reps)
        except (EstimationError, IntegrationError) as exc:
            errors[k] = str(exc)
            log.warning("phase point %d (phi_x = %.3f) failed: %s", k, phx, exc)
            continue
        cols["p"][k], cols["lo"][k], cols["hi"][k] = est.p_hat, est.ci_low, est.ci_high
        n_valid[k], n_amb[k] = est.n_valid, est.n_ambiguous
    return DetectionCurve(phases, cols["p"], n_valid, n_amb, cols["lo"], cols["hi"], seeds, errors)


def erf_model(phi_x, phi_t: float, delta_phi: float):
    """Transition model P = (1 + erf(sqrt(pi) (phi_x - phi_t) / delta_phi)) / 2."""
    return 0.5 * (1.0 + erf(math.sqrt(math.pi) * (np.asarray(phi_x) - phi_t) / delta_phi))


def _wrap(x):
    return (np.asarray(x) + math.pi) % (2.0 * math.pi) - math.pi


def _periodic_view(curve: DetectionCurve):
    """Valid points with a duplicated 2 pi endpoint removed."""
    ph, p = curve.phases[curve.valid], curve.p_hat[curve.valid]
    nv = curve.n_valid[curve.valid]
    if ph.size > 1 and math.isclose(ph[-1] - ph[0], 2.0 * math.pi, rel_tol=1e-9):
        ph, p, nv = ph[:-1], p[:-1], nv[:-1]
    return ph, p, nv


def fit_gray_zone(curve: DetectionCurve) -> GrayZoneFit:
    """Fit the erf transition model to the rising branch of a detection curve.

    The curve is periodic in phi_x; the fit window is the half period centred on
    the steepest rise.  Points are weighted by binomial standard errors.
    """
    if int(np.count_nonzero(curve.valid)) < 5:
        raise FitError("need at least 5 valid points")
    ph, p, nv = _periodic_view(curve)
    rise = np.roll(p, -1) - p
    k = int(np.argmax(rise))
    step = _wrap(ph[(k + 1) % ph.size] - ph[k])
    centre = ph[k] + 0.5 * step
    x = centre + _wrap(ph - centre)
    sel = np.abs(x - centre) <= 0.5 * math.pi + 1e-12
    x, y, n = x[sel], p[sel], nv[sel]
    if x.size < 3:
        raise FitError("too few points in the transition window")
    order = np.argsort(x)
    x, y, n = x[order], y[order], n[order]
    # Wilson-centred binomial errors keep weights finite at p = 0 or 1.
    pc = (y * n + 2.0) / (n + 4.0)
    sigma = np.sqrt(pc * (1.0 - pc) / (n + 4.0))

    def resid(theta):
        return (erf_model(x, theta[0], theta[1]) - y) / sigma

    lo = np.array([centre - 0.5 * math.pi, 1e-6])
    hi = np.array([centre + 0.5 * math.pi, 1e3])
    best = None
    for dt0 in (-0.5, -0.25, 0.0, 0.25, 0.5):
        for d0 in (0.05, 0.3, 1.0):
            theta0 = np.clip([centre + dt0 * abs(step), d0], lo + 1e-9, hi - 1e-9)
            try:
                sol = least_squares(resid, theta0, bounds=(lo, hi), method="trf",
                                    xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
            except (ValueError, FloatingPointError):
                continue
            if not np.all(np.isfinite(sol.x)) or sol.status <= 0:
                continue
            if best is None or sol.cost < best.cost:
                best = sol
    if best is None:
        raise FitError("gray-zone fit did not converge from any start")
    phi_t, delta = float(best.x[0]), float(best.x[1])
    capped = delta > GRAY_ZONE_CAP
    return GrayZoneFit(min(delta, GRAY_ZONE_CAP), phi_t % (2.0 * math.pi),
                       float(np.sqrt(2.0 * best.cost)), capped)


def separation_fidelity(curve: DetectionCurve) -> float:
    """Mean of the maximum probability and one minus the minimum probability."""
    p = curve.p_hat[curve.valid]
    if p.size < 2:
        raise ValueError("need at least 2 valid points")
    return 0.5 * (float(np.max(p)) + 1.0 - float(np.min(p)))


def circular_distance(a: float, b: float) -> float:
    return abs(float(_wrap(a - b)))


def _sweep(name: str, controls, configs, n_phases, n_reps, threads, estimator) -> SweepResult:
    n = len(controls)
    fid = np.full(n, math.nan)
    gz = np.full(n, GRAY_ZONE_CAP)
    capped = np.ones(n, dtype=bool)
    phi_t = np.full(n, math.nan)
    curves, errors = [], {}
    for k, cfg in enumerate(configs):
        log.info("%s point %d/%d: control = %.6g", name, k + 1, n, controls[k])
        curve = phase_sweep(cfg, n_phases, n_reps, threads, estimator)
        curves.append(curve)
        if curve.errors:
            errors[k] = f"{len(curve.errors)} phase point(s) failed"
        try:
            fid[k] = separation_fidelity(curve)
        except ValueError as exc:
            errors[k] = str(exc)
            continue
        try:
            fit = fit_gray_zone(curve)
        except FitError as exc:
            log.warning("%s point %d: %s; gray zone recorded as capped", name, k, exc)
            continue
        gz[k], capped[k], phi_t[k] = fit.delta_phi, fit.capped, fit.phi_t
    return SweepResult(name, np.asarray(controls, dtype=float), fid, gz, capped, phi_t, curves, errors)


def sweep_flip_duration(base_cfg: SimulationConfig, durations: Sequence[float] = DEFAULT_FLIPS,
                        n_phases: int = 15, n_reps: int = 500, threads: int | None = None,
                        estimator: Estimator | None = None) -> SweepResult:
    durations = [float(d) for d in durations]
    if any(d <= 0 for d in durations) or durations != sorted(durations):
        raise ValueError("durations must be positive and sorted")
    configs = [replace(config_for_flip(d, base_cfg), seed=derive_seed(base_cfg.seed, k))
               for k, d in enumerate(durations)]
    return _sweep("flip-duration", durations, configs, n_phases, n_reps, threads, estimator)


def sweep_flux_noise(base_cfg: SimulationConfig, sigmas: Sequence[float] = DEFAULT_FLUX_SIGMAS,
                     n_phases: int = 15, n_reps: int = 500, threads: int | None = None,
                     estimator: Estimator | None = None, flip_duration: float = 100e-12,
                     amplitude: float = 0.35e-6) -> SweepResult:
    """Flux-noise sweep at a 100 ps flip and 0.35 uA stimulus."""
    sigmas = [float(s) for s in sigmas]
    if any(s < 0 for s in sigmas) or sigmas != sorted(sigmas):
        raise ValueError("sigmas must be non-negative and sorted")
    base = config_for_flip(flip_duration, base_cfg)
    base = replace(base, stimulus=replace(base.stimulus, amplitude=amplitude))
    configs = [replace(base, seed=derive_seed(base_cfg.seed, k),
                       flux_switch=replace(base.flux_switch, flux_noise_sigma=s))
               for k, s in enumerate(sigmas)]
    return _sweep("flux-noise", sigmas, configs, n_phases, n_reps, threads, estimator)


def staircase_configs(base_cfg: SimulationConfig, fbd: FbdParams, steps: Sequence[int]) -> list[SimulationConfig]:
    """One config per step count, sharing a stimulus window sized for the longest staircase."""
    switches = [staircase_switch(int(n), fbd, base_cfg.flux_switch) for n in steps]
    duration = stimulus_duration_for_flip(max(sw.flip_duration for sw in switches))
    stim = replace(base_cfg.stimulus, duration=duration)
    return [replace(base_cfg, stimulus=stim, flux_switch=sw, seed=derive_seed(base_cfg.seed, k))
            for k, sw in enumerate(switches)]


def sweep_staircase_steps(base_cfg: SimulationConfig, fbd_cfg: FbdParams | None = None,
                          steps: Sequence[int] = DEFAULT_STEPS, n_phases: int = 15, n_reps: int = 500,
                          threads: int | None = None, estimator: Estimator | None = None) -> SweepResult:
    fbd_cfg = fbd_cfg or FbdParams()
    steps = [int(n) for n in steps]
    if any(n < 1 for n in steps):
        raise ValueError("step counts must be >= 1")
    configs = staircase_configs(base_cfg, fbd_cfg, steps)
    return _sweep("staircase", steps, configs, n_phases, n_reps, threads, estimator)


def dephasing(result: SweepResult, reference: int = 0) -> np.ndarray:
    """Circular distance of each point's fitted phi_t from the reference point's."""
    ref = result.phi_t[reference]
    return np.array([circular_distance(v, ref) if np.isfinite(v) else math.nan for v in result.phi_t])
