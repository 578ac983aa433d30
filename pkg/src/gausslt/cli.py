"""Command-line entry point.

Exit codes: 0 success, 1 a property check failed, 2 usage, configuration
or I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import COMMANDS, PRESETS, ConfigError, ExperimentConfig, load_config
from .harness import run, write_output

# flag -> config key; values stay strings and go through the strict parser
_FLAGS = {
    "--seed": "seed", "--grid": "grid", "--moment-grid": "moment_grid", "--eps": "eps",
    "--reps": "reps", "--bins": "bins", "--refinement": "refinement", "--operator": "operator",
    "--scale": "scale", "--kernel": "kernel", "--kernel-file": "kernel_file", "--strength": "strength",
    "--multiplier": "multiplier", "--family": "family", "--ns": "ns", "--a": "a", "--alpha": "alpha",
    "--p": "p", "--dim": "dim", "--trials": "trials", "--input": "input", "--output": "output",
    "--threads": "threads",
}

_HELP = {
    "simulate": "dump integrator or bridge paths as CSV",
    "verify": "run the randomized inequality suites",
    "lt-moments": "exact and Monte Carlo second moment of local time",
    "lt-converge": "mean-square distance of local times along an operator sequence",
    "selfx-1d": "conditional self-intersection moment of 1D Brownian motion",
    "selfx-planar": "separated planar self-intersection moment and its |a| -> inf limit",
    "plotdata": "split a result CSV into per-series text files",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gausslt", description="Local times of Gaussian integrators.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=_HELP[name])
        sp.add_argument("--config", help="key = value file; flags override its entries")
        sp.add_argument("--preset", choices=sorted(PRESETS))
        for flag, key in _FLAGS.items():
            sp.add_argument(flag, dest=key, metavar=key.upper())
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        data = load_config(args.config) if args.config else {}
        if data.get("command", args.command) != args.command:
            raise ConfigError(f"config file is for {data['command']!r}, not {args.command!r}")
        data["command"] = args.command
        if args.preset:
            data["preset"] = args.preset
        for key in _FLAGS.values():
            v = getattr(args, key)
            if v is not None:
                data[key] = v
        cfg = ExperimentConfig.from_mapping(data)
        out = run(cfg)
        write_output(out, sys.stdout)
    except ConfigError as exc:
        print(f"gausslt: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"gausslt: I/O error: {exc}", file=sys.stderr)
        return 2
    for m in out.messages:
        print(m, file=sys.stderr)
    return out.exit_code


if __name__ == "__main__":
    sys.exit(main())
