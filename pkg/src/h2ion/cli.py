"""Command line entry point: ``h2ion run|sweep|validate --config FILE``."""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config, resolved_lines
from .runner import run_scenario


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="h2ion", description="Open-system simulation of hydrogen-molecule ionization.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (
        ("run", "run a single scenario and write its time series"),
        ("sweep", "evaluate every cell of the configured grid"),
        ("validate", "parse the config and print every resolved setting"),
    ):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", required=True, help="TOML run configuration")
        if name != "validate":
            sp.add_argument("--threads", type=int, default=None, help="worker processes for sweep cells")
            sp.add_argument("--out", default=None, help="output path prefix")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.command == "validate":
        print("\n".join(resolved_lines(cfg)))
        return 0
    if args.command == "run" and cfg.axes:
        print("error: config defines sweep axes; use the sweep command", file=sys.stderr)
        return 2
    if args.command == "sweep" and not cfg.axes:
        print("error: config defines no [[sweep.axis]]", file=sys.stderr)
        return 2
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2

    try:
        paths, ok = run_scenario(cfg, args.out, args.threads)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in paths:
        print(path)
    if not ok:
        print("error: at least one run failed, see the status/header lines", file=sys.stderr)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
