"""``jdpd-lab`` command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from jdpd_lab import __version__
from jdpd_lab.config import EXPERIMENTS, ConfigError, build, config_schema, default_config, load, resolve
from jdpd_lab.fbd import TimingError
from jdpd_lab.plots import CsvParseError, plot_csv

log = logging.getLogger("jdpd_lab")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _threads(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return v


def parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="jdpd-lab", description="JDPD detection-fidelity experiments")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment")
    run.add_argument("--config", type=Path, help="JSON experiment configuration")
    run.add_argument("--experiment", choices=EXPERIMENTS)
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                     help="dotted-path override, repeatable (value parsed as JSON)")
    run.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    run.add_argument("--threads", type=_threads, help="worker threads (default: $JDPD_LAB_THREADS)")
    run.add_argument("--seed", type=_u64)

    plot = sub.add_parser("plot", help="render result CSVs as SVG")
    plot.add_argument("files", nargs="+", type=Path)
    plot.add_argument("--out", type=Path)

    pd = sub.add_parser("print-defaults", help="print the default configuration")
    pd.add_argument("--schema", action="store_true", help="print the JSON schema instead")
    return ap


def _cmd_run(args) -> int:
    from jdpd_lab.experiments import run_experiment

    user = load(args.config) if args.config else {}
    overrides = list(args.overrides)
    if args.experiment:
        overrides.insert(0, f"experiment={json.dumps(args.experiment)}")
    cfg = resolve(user, overrides, seed=args.seed)
    if args.seed is None and user.get("seed") is None and not any(o.startswith("seed=") for o in overrides):
        log.warning("no seed given; using generated seed %d", cfg["seed"])
    out = args.out if args.out else Path(cfg["output_dir"])
    threads = args.threads
    if threads is None and os.environ.get("JDPD_LAB_THREADS"):
        threads = _threads(os.environ["JDPD_LAB_THREADS"])
    manifest = run_experiment(cfg, build(cfg), out, threads)
    print(f"{cfg['experiment']}: wrote {', '.join(manifest['files'])} to {out}")
    return 0


def _cmd_plot(args) -> int:
    for f in args.files:
        print(plot_csv(f, args.out))
    return 0


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "plot":
            return _cmd_plot(args)
        print(json.dumps(config_schema() if args.schema else default_config(), indent=2))
        return 0
    except (ConfigError, CsvParseError, TimingError, OSError) as exc:
        print(f"jdpd-lab: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # fatal simulation failure
        print(f"jdpd-lab: fatal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
