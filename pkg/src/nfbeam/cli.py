"""Command line entry point: ``nfbeam <subcommand> [--config ...]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import experiments as ex

SUBCOMMANDS = ("filters", "beampattern", "coherence", "complexity", "all")


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors end with a JSON error line."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(json.dumps({"error": "UsageError", "message": message, "command": None}), file=sys.stderr)
        sys.exit(2)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nfbeam", description="Run nearfield beamformer experiments.")
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", help="JSON experiment config (defaults used when omitted)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--mode", choices=("freq", "time"), default="freq", help="beamformer used for patterns")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def load_config(args) -> ex.ExperimentConfig:
    cfg = ex.ExperimentConfig.from_file(args.config) if args.config else ex.ExperimentConfig()
    if args.out is not None:
        cfg.output_dir = args.out
    if args.seed is not None:
        if args.seed < 0:
            raise ValueError("seed must be non-negative")
        cfg.seed = args.seed
    return cfg


def run(args) -> dict:
    cfg = load_config(args)
    if args.command == "filters":
        return ex.run_filters(cfg)
    if args.command == "beampattern":
        return ex.run_beampattern(cfg, args.mode)
    if args.command == "coherence":
        return ex.run_coherence(cfg)
    if args.command == "complexity":
        return ex.run_complexity(cfg)
    return ex.run_all(cfg, args.mode)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = run(args)
    except Exception as exc:  # reported as one machine-readable line
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "command": args.command}),
              file=sys.stderr)
        return 1
    print(json.dumps({"command": args.command, "summary": summary}, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
