"""Command-line entry points.

Exit codes: 0 on success, 2 for configuration problems, 3 when some Monte
Carlo runs failed (outputs for the completed runs are still written).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .errors import ConfigError
from .harness import (generate_missing_pattern, load_config, run_mc,
                      write_dataset_csv)


def _add_common(sub):
    sub.add_argument("--config", required=True, help="path to a TOML experiment config")
    sub.add_argument("--out", default=None, help="output directory (default: current directory)")
    sub.add_argument("--paper-scale", action="store_true",
                     help="use the full-scale particle/run counts from the paper_scale section")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kernelsmc",
                                     description="Adaptive SMC state/parameter estimation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="single filtering run")
    _add_common(p_run)

    p_mc = sub.add_parser("mc", help="Monte Carlo sweep")
    _add_common(p_mc)
    p_mc.add_argument("--runs", type=int, default=None,
                      help="number of runs (default: run.mc_runs from the config)")

    p_sim = sub.add_parser("simulate", help="write a simulated dataset without filtering")
    _add_common(p_sim)

    sub.add_parser("version", help="print the package version")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "version":
        print(__version__)
        return 0
    try:
        cfg = load_config(args.config)
        if args.paper_scale:
            cfg = cfg.at_paper_scale()
        out = args.out if args.out is not None else "."
        if args.command == "simulate":
            from .benchmarks import simulate_truth
            model, _, theta_true, x0 = cfg.build()
            data_ss = np.random.SeedSequence(cfg.seed, spawn_key=(1, 0))
            pattern_entropy = cfg.seed if cfg.pattern_seed is None else cfg.pattern_seed
            pattern_ss = np.random.SeedSequence(pattern_entropy, spawn_key=(1, 2))
            data = simulate_truth(model, theta_true, [x0], cfg.n_steps, data_ss)
            missing = generate_missing_pattern(cfg.n_steps, cfg.missing_percent, pattern_ss)
            from pathlib import Path
            Path(out).mkdir(parents=True, exist_ok=True)
            write_dataset_csv(Path(out) / "dataset.csv", data, missing)
            return 0
        runs = 1 if args.command == "run" else args.runs
        summary = run_mc(cfg, runs=runs, out_dir=out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if summary["failed_runs"]:
        for item in summary["failed_runs"]:
            print(f"run {item['run']} failed: {item['error']}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
