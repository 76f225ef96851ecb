"""Regenerate every figure/table CSV in both beampattern modes.

Usage: python scripts/reproduce.py [--config path.json] [--out results]

Frequency-mode patterns land in ``<out>/freq`` and time-mode patterns (capture
simulation plus both beamformers) in ``<out>/time``; filters, coherence and
complexity are written once, into ``<out>/freq``.
"""
import argparse
import json
import logging
import time
from pathlib import Path

from nfbeam import experiments as ex


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config")
    p.add_argument("--out", default="results")
    p.add_argument("--skip-time", action="store_true", help="skip the slower time-mode patterns")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    def load(sub):
        cfg = ex.ExperimentConfig.from_file(args.config) if args.config else ex.ExperimentConfig()
        cfg.output_dir = str(Path(args.out) / sub)
        return cfg

    summary = {}
    t0 = time.perf_counter()
    summary["freq"] = ex.run_all(load("freq"), "freq")
    if not args.skip_time:
        summary["time"] = ex.run_beampattern(load("time"), "time")
    summary["elapsed_s"] = round(time.perf_counter() - t0, 1)
    print(json.dumps(summary, indent=2, default=str))


if __name__ == "__main__":
    main()
