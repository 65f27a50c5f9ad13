"""Experiment configuration: defaults, JSON schema, overrides and object construction."""

from __future__ import annotations

import copy
import dataclasses
import json
import math
import secrets
from dataclasses import dataclass
from typing import Any

import jsonschema

from jdpd_lab.analysis import DEFAULT_FLIPS, DEFAULT_FLUX_SIGMAS, DEFAULT_STEPS
from jdpd_lab.circuit import JdpdParams, JunctionParams
from jdpd_lab.drives import FluxSwitchSpec, StimulusSpec
from jdpd_lab.engine import SimulationConfig
from jdpd_lab.fbd import CycleTiming, FbdParams

EXPERIMENTS = ("single-run", "phase-sweep", "flip-duration-sweep", "flux-noise-sweep",
               "staircase-sweep", "fbd-cycle")

# Fields that must be strictly positive; checked by the schema so errors name the path.
POSITIVE = {
    "dt", "settle_time", "central_inductance", "loop_inductance_1", "loop_inductance_2",
    "critical_current", "shunt_resistance", "capacitance_per_area", "critical_current_density",
    "frequency", "duration", "envelope_sigma", "flip_duration", "mutual_inductance",
    "current_per_pulse", "target_flux", "rise_time", "step_interval", "hold", "budget",
    "n_reps", "n_phases", "n_steps",
}
NON_NEGATIVE = {"amplitude", "noise_temperature", "flux_noise_sigma", "flux_noise_hold", "t0"}
ENUMS = {
    "experiment": list(EXPERIMENTS),
    "ramp_shape": ["linear", "smoothstep"],
    "flux_noise_gate": ["switch", "always"],
    "reset_mode": ["instant", "staircase-down"],
}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending path."""


def _fields(obj, skip=()) -> dict:
    return {f.name: copy.deepcopy(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.name not in skip}


def default_config() -> dict:
    sim = SimulationConfig()
    params = _fields(sim.params, skip=("junction", "junction_2", "constants"))
    params["junction"] = _fields(sim.params.junction)
    params["junction_2"] = None
    timing = CycleTiming()
    return {
        "experiment": "phase-sweep",
        "seed": None,
        "n_reps": 500,
        "n_phases": 15,
        "output_dir": "results",
        "simulation": {k: getattr(sim, k) for k in ("dt", "noise_temperature", "settle_time",
                                                    "align_switch", "phi_minus")},
        "params": params,
        "stimulus": _fields(sim.stimulus),
        "flux_switch": _fields(sim.flux_switch),
        "fbd": _fields(FbdParams(), skip=("constants",)),
        "sweep": {
            "flip_durations": [float(x) for x in DEFAULT_FLIPS],
            "flux_noise_sigmas": [float(x) for x in DEFAULT_FLUX_SIGMAS],
            "step_counts": list(DEFAULT_STEPS),
        },
        "cycle": _fields(timing),
    }


# Keys whose default is None and the type they take when set.
NULLABLE = {
    "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
    "noise_temperature": {"type": "number"},
    "envelope_sigma": {"type": "number"},
    "current_per_pulse": {"type": "number"},
    "profile": {"type": "array", "items": {"type": "array", "items": {"type": "number"},
                                           "minItems": 2, "maxItems": 2}},
}


def _schema_for(key: str, value: Any) -> dict:
    if key == "junction_2":
        return {"anyOf": [{"type": "null"}, _schema_for("junction", default_config()["params"]["junction"])]}
    if isinstance(value, dict):
        return {"type": "object", "additionalProperties": False,
                "properties": {k: _schema_for(k, v) for k, v in value.items()}}
    if value is None:
        s = {"anyOf": [{"type": "null"}, dict(NULLABLE[key])]}
        target = s["anyOf"][1]
    elif isinstance(value, bool):
        return {"type": "boolean"}
    elif isinstance(value, int):
        s = target = {"type": "integer"}
    elif isinstance(value, float):
        s = target = {"type": "number"}
    elif isinstance(value, str):
        s = {"type": "string"}
        if key in ENUMS:
            s["enum"] = ENUMS[key]
        return s
    elif isinstance(value, list):
        item = "integer" if key == "step_counts" else "number"
        lim = {"exclusiveMinimum": 0} if key != "flux_noise_sigmas" else {"minimum": 0}
        return {"type": "array", "minItems": 1, "items": {"type": item, **lim}}
    else:
        raise TypeError(f"no schema for {key}={value!r}")
    if key in POSITIVE:
        target["exclusiveMinimum"] = 0
    elif key in NON_NEGATIVE:
        target["minimum"] = 0
    return s


def config_schema() -> dict:
    schema = _schema_for("", default_config())
    schema["$schema"] = "https://json-schema.org/draft/2020-12/schema"
    schema["title"] = "jdpd-lab experiment configuration"
    return schema


def _deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        elif isinstance(v, dict) and k == "junction_2":
            out[k] = _deep_merge(out["junction"] if "junction" in out else {}, v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_override(text: str) -> tuple[list[str], Any]:
    """``a.b.c=value``; the value is parsed as JSON when possible, else kept as a string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    path = [p for p in key.strip().split(".")]
    if not all(path):
        raise ConfigError(f"override {text!r} has an empty key segment")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def apply_overrides(cfg: dict, overrides) -> dict:
    cfg = copy.deepcopy(cfg)
    for text in overrides:
        path, value = parse_override(text)
        node = cfg
        for part in path[:-1]:
            if part == "junction_2" and node.get(part) is None:
                node[part] = copy.deepcopy(node.get("junction", {}))
            nxt = node.setdefault(part, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"override {text!r}: '{part}' is not a section")
            node = nxt
        node[path[-1]] = value
    return cfg


def _format_error(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in err.absolute_path) or "<root>"
    if err.validator == "additionalProperties":
        return f"{path}: {err.message}"
    expected = err.schema.get("type") if isinstance(err.schema, dict) else None
    hint = f" (expected {expected})" if expected else ""
    return f"{path}: {err.message}{hint}"


def validate(cfg: dict) -> None:
    validator = jsonschema.Draft202012Validator(config_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(_format_error(e) for e in errors))
    for section in ("flip_durations", "flux_noise_sigmas", "step_counts"):
        vals = cfg["sweep"][section]
        if list(vals) != sorted(vals):
            raise ConfigError(f"sweep.{section}: values must be sorted ascending")
    for k, v in _walk(cfg):
        if isinstance(v, float) and not math.isfinite(v):
            raise ConfigError(f"{k}: value must be finite")


def _walk(node, prefix=""):
    if isinstance(node, dict):
        for k, v in node.items():
            yield from _walk(v, f"{prefix}.{k}" if prefix else k)
    elif isinstance(node, list):
        for i, v in enumerate(node):
            yield from _walk(v, f"{prefix}[{i}]")
    else:
        yield prefix, node


def resolve(user: dict | None = None, overrides=(), seed: int | None = None) -> dict:
    """Merge a user config and overrides onto the defaults, validate, and fix the seed."""
    cfg = _deep_merge(default_config(), user or {})
    cfg = apply_overrides(cfg, overrides)
    if seed is not None:
        cfg["seed"] = seed
    validate(cfg)
    if cfg["seed"] is None:
        cfg["seed"] = secrets.randbits(64)
    return cfg


def load(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


@dataclass(frozen=True)
class Experiment:
    """Objects built from a resolved configuration."""

    name: str
    sim: SimulationConfig
    fbd: FbdParams
    timing: CycleTiming
    n_reps: int
    n_phases: int
    sweep: dict


def build(cfg: dict) -> Experiment:
    try:
        p = dict(cfg["params"])
        junction = JunctionParams(**p.pop("junction"))
        j2 = p.pop("junction_2")
        params = JdpdParams(junction=junction, junction_2=None if j2 is None else JunctionParams(**j2), **p)
        sw = dict(cfg["flux_switch"])
        if sw.get("profile") is not None:
            sw["profile"] = tuple(tuple(bp) for bp in sw["profile"])
        sim = SimulationConfig(params=params, stimulus=StimulusSpec(**cfg["stimulus"]),
                               flux_switch=FluxSwitchSpec(**sw), seed=int(cfg["seed"]), **cfg["simulation"])
        fbd = FbdParams(**cfg["fbd"])
        timing = CycleTiming(**cfg["cycle"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return Experiment(cfg["experiment"], sim, fbd, timing, int(cfg["n_reps"]), int(cfg["n_phases"]),
                      copy.deepcopy(cfg["sweep"]))
