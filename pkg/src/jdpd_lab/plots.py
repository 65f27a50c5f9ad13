"""SVG rendering of result CSVs.  Pure rendering; nothing is recomputed."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# Fixed hash salt and no date stamp keep the SVG output reproducible.
matplotlib.rcParams["svg.hashsalt"] = "jdpd-lab"

KINDS = {
    "phase": ["phase_rad", "p_hat", "n_valid", "n_ambiguous", "ci_low", "ci_high", "seed"],
    "sweep": ["control", "fidelity", "gray_zone_rad", "capped", "phi_t_rad", "min_p", "max_p",
              "failed_phase_points"],
    "waveform": ["t_s", "i_lfb_A", "phi_plus_rad"],
    "trajectory": ["t_s", "phi_rad", "i_l_A", "delta1_rad", "delta2_rad"],
}


class CsvParseError(ValueError):
    pass


def read_result_csv(path) -> tuple[str, dict[str, list[float]]]:
    """Parse a result CSV; returns its kind and numeric columns."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CsvParseError(f"{path}: empty file")
    header = rows[0]
    kind = next((k for k, cols in KINDS.items() if header == cols), None)
    if kind is None:
        raise CsvParseError(f"{path}:1: unrecognized header {','.join(header)!r}")
    if len(rows) < 2:
        raise CsvParseError(f"{path}: no data rows")
    data = {c: [] for c in header}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise CsvParseError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        for c, v in zip(header, row):
            try:
                data[c].append(float(v) if v != "" else math.nan)
            except ValueError:
                raise CsvParseError(f"{path}:{lineno}: column {c!r} is not numeric: {v!r}") from None
    return kind, data


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _phase(data, title):
    fig, ax = plt.subplots(figsize=(6, 4))
    p = data["p_hat"]
    # Wilson bounds can sit a rounding error inside p_hat at 0 or 1.
    lo = [max(pi - l, 0.0) for pi, l in zip(p, data["ci_low"])]
    hi = [max(h - pi, 0.0) for pi, h in zip(p, data["ci_high"])]
    ax.errorbar(data["phase_rad"], p, yerr=[lo, hi], fmt="o-", capsize=3)
    ax.set(xlabel="stimulus phase (rad)", ylabel="P(state 1)", ylim=(-0.05, 1.05), title=title)
    return fig


def _sweep(data, title):
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    x = data["control"]
    a1.plot(x, data["fidelity"], "o-")
    a1.set(ylabel="separation fidelity", title=title)
    capped = [c > 0.5 for c in data["capped"]]
    a2.plot(x, data["gray_zone_rad"], "-", color="tab:gray")
    a2.scatter([v for v, c in zip(x, capped) if not c], [g for g, c in zip(data["gray_zone_rad"], capped) if not c],
               marker="o", label="fitted")
    a2.scatter([v for v, c in zip(x, capped) if c], [g for g, c in zip(data["gray_zone_rad"], capped) if c],
               marker="^", color="tab:red", label="capped")
    a2.set(xlabel="control", ylabel="gray zone (rad)")
    a2.legend()
    if min(x) > 0 and max(x) / min(x) > 50:
        a2.set_xscale("log")
    return fig


def _waveform(data, title):
    fig, a1 = plt.subplots(figsize=(6, 4))
    t = [v * 1e9 for v in data["t_s"]]
    a1.plot(t, [v * 1e6 for v in data["i_lfb_A"]])
    a1.set(xlabel="time (ns)", ylabel="I_LFB (uA)", title=title)
    a2 = a1.twinx()
    a2.plot(t, data["phi_plus_rad"], color="tab:orange", linestyle="--")
    a2.set_ylabel("phi_+ (rad)")
    return fig


def _trajectory(data, title):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([v * 1e9 for v in data["t_s"]], data["phi_rad"])
    ax.set(xlabel="time (ns)", ylabel="phi (rad)", title=title)
    return fig


RENDER = {"phase": _phase, "sweep": _sweep, "waveform": _waveform, "trajectory": _trajectory}


def plot_csv(path, out_dir=None) -> Path:
    """Render one result CSV to an SVG next to it (or in ``out_dir``)."""
    path = Path(path)
    kind, data = read_result_csv(path)
    target = (Path(out_dir) if out_dir else path.parent) / (path.stem + ".svg")
    target.parent.mkdir(parents=True, exist_ok=True)
    return _save(RENDER[kind](data, path.stem.replace("_", " ")), target)
