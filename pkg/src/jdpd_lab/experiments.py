"""Runs a configured experiment and writes CSV results, a JSON summary and a manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

import jdpd_lab
from jdpd_lab._io import fmt
from jdpd_lab.analysis import (
    FitError,
    SweepResult,
    fit_gray_zone,
    phase_sweep,
    separation_fidelity,
    sweep_flip_duration,
    sweep_flux_noise,
    sweep_staircase_steps,
)
from jdpd_lab.circuit import double_well_minimum
from jdpd_lab.config import Experiment
from jdpd_lab.drives import StimulusSpec
from jdpd_lab.engine import simulate
from jdpd_lab.fbd import flux_from_ilfb, set_reset_cycle, staircase_switch, write_waveform_csv

log = logging.getLogger(__name__)

CURVE_COLUMNS = ["point", "control", "phase_rad", "p_hat", "n_valid", "n_ambiguous", "ci_low", "ci_high", "seed"]


def _num(x):
    """JSON-safe float: NaN becomes null."""
    x = float(x)
    return None if math.isnan(x) else x


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_curves(path: Path, result: SweepResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_COLUMNS)
        for k, c in enumerate(result.curves):
            for j in range(len(c.phases)):
                w.writerow([k, fmt(result.control_values[k]), fmt(c.phases[j]), fmt(c.p_hat[j]),
                            int(c.n_valid[j]), int(c.n_ambiguous[j]), fmt(c.ci_low[j]), fmt(c.ci_high[j]),
                            c.seeds[j]])


def _sweep_summary(result: SweepResult) -> dict:
    return {
        "control": [_num(v) for v in result.control_values],
        "fidelity": [_num(v) for v in result.fidelity],
        "gray_zone_rad": [_num(v) for v in result.gray_zone],
        "capped": [bool(v) for v in result.capped],
        "phi_t_rad": [_num(v) for v in result.phi_t],
        "failed_points": {str(k): v for k, v in result.errors.items()},
    }


def _single(exp: Experiment, out: Path, threads) -> tuple[dict, list[Path], list[int]]:
    outcome, traj = simulate(replace(exp.sim, record_trajectory=True))
    path = out / "trajectory.csv"
    traj.to_csv(path)
    return ({"state_bit": outcome.state_bit, "final_phi_rad": outcome.final_phi, "escaped": outcome.escaped},
            [path], [exp.sim.seed])


def _phase(exp: Experiment, out: Path, threads):
    curve = phase_sweep(exp.sim, exp.n_phases, exp.n_reps, threads)
    path = out / "phase_sweep.csv"
    curve.write_csv(path)
    summary = {"failed_points": {str(k): v for k, v in curve.errors.items()}}
    try:
        summary["fidelity"] = separation_fidelity(curve)
    except ValueError as exc:
        summary["fidelity"] = None
        log.warning("fidelity unavailable: %s", exc)
    try:
        fit = fit_gray_zone(curve)
        summary["fit"] = {"gray_zone_rad": fit.delta_phi, "phi_t_rad": fit.phi_t,
                          "residual_norm": fit.residual_norm, "capped": fit.capped}
    except FitError as exc:
        summary["fit"] = None
        log.warning("gray-zone fit failed: %s", exc)
    return summary, [path], curve.seeds


def _sweep(kind):
    def run(exp: Experiment, out: Path, threads):
        sw = exp.sweep
        if kind == "flip":
            res = sweep_flip_duration(exp.sim, sw["flip_durations"], exp.n_phases, exp.n_reps, threads)
        elif kind == "flux":
            res = sweep_flux_noise(exp.sim, sw["flux_noise_sigmas"], exp.n_phases, exp.n_reps, threads)
        else:
            res = sweep_staircase_steps(exp.sim, exp.fbd, sw["step_counts"], exp.n_phases, exp.n_reps, threads)
        for k, msg in res.errors.items():
            log.warning("sweep point %d: %s", k, msg)
        paths = [out / "sweep.csv", out / "curves.csv"]
        res.write_csv(paths[0])
        _write_curves(paths[1], res)
        seeds = [s for c in res.curves for s in c.seeds]
        return _sweep_summary(res), paths, seeds
    return run


def _fbd_cycle(exp: Experiment, out: Path, threads):
    p, timing = exp.fbd, exp.timing
    wave, phi_plus, duration = set_reset_cycle(p, timing)
    t_end = wave.breakpoints[-1][0] + timing.t0
    times = np.linspace(0.0, t_end, int(round(t_end / 1e-12)) + 1)
    paths = [out / "waveform.csv"]
    write_waveform_csv(paths[0], wave, p, times)
    plateau_i = float(wave.currents.max())

    # Drive the detector with the same staircase mapped onto its switch levels, no tone.
    sw = replace(staircase_switch(timing.n_steps, p, exp.sim.flux_switch), switch_time=timing.t0)
    stim = StimulusSpec(amplitude=0.0, frequency=exp.sim.stimulus.frequency,
                        duration=timing.t0 + sw.flip_duration + timing.hold)
    outcome, traj = simulate(replace(exp.sim, stimulus=stim, flux_switch=sw, align_switch=False,
                                     record_trajectory=True))
    paths.append(out / "jdpd_trajectory.csv")
    traj.to_csv(paths[1])
    phi_star = double_well_minimum(exp.sim.params)
    summary = {
        "cycle_duration_s": duration,
        "budget_s": timing.budget,
        "plateau_current_A": plateau_i,
        "plateau_phi_plus_rad": float(flux_from_ilfb(plateau_i, p)),
        "jdpd_final_phi_rad": outcome.final_phi,
        "phi_star_rad": phi_star,
        "relative_well_error": abs(abs(outcome.final_phi) - phi_star) / phi_star,
    }
    return summary, paths, [exp.sim.seed]


RUNNERS = {
    "single-run": _single,
    "phase-sweep": _phase,
    "flip-duration-sweep": _sweep("flip"),
    "flux-noise-sweep": _sweep("flux"),
    "staircase-sweep": _sweep("stair"),
    "fbd-cycle": _fbd_cycle,
}


def run_experiment(cfg: dict, exp: Experiment, out_dir, threads: int | None = None) -> dict:
    """Execute ``exp`` and write outputs; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    results, paths, seeds = RUNNERS[exp.name](exp, out, threads)
    summary_path = out / "summary.json"
    summary = {"experiment": exp.name, "config": cfg, "results": results}
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    paths.append(summary_path)
    manifest = {
        "tool": "jdpd-lab",
        "version": jdpd_lab.__version__,
        "config": cfg,
        "wall_clock_s": time.perf_counter() - t0,
        "seeds": [int(s) for s in seeds],
        "files": {p.name: sha256(p) for p in paths},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
