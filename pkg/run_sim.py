#!/usr/bin/env python3
"""
Read-Window Simulator Runner

Runs one command of the sub-threshold 8T SRAM read-window simulator.

Usage:
    python run_sim.py sweep configs/default.cfg                # leakage / delay / window grid
    python run_sim.py clock configs/default.cfg                # digitized clock period vs vdd
    python run_sim.py calibrate configs/default.cfg --out results
    python run_sim.py simulate configs/default.cfg --trace reads.trace --worst-case --expect-clean

Exit codes: 0 success, 1 invalid input, 2 acceptance failure (--expect-clean).
"""
import argparse
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.config import ENV_PREFIX, parse_config
from src.errors import ConfigError, SimError
from src.experiment import EXIT_INVALID, Command, Experiment, ExperimentConfig


def parse_args(argv=None):
    parser = argparse.ArgumentParser(
        description="Sub-threshold 8T SRAM read-window simulator",
        epilog=f"Any config key can be overridden with {ENV_PREFIX}<SECTION>__<KEY>, "
               f"e.g. {ENV_PREFIX}ENV__VDD=0.3. Precedence: flag > environment > file > default.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", nargs="?", default=None, help="Config file (key.path = value lines)")
    common.add_argument("--seed", type=int, help="Override variation.seed")
    common.add_argument("--trials", type=int, help="Override variation.trials (MC chips)")
    common.add_argument("--out", type=str, help="Override output.dir")
    common.add_argument("--workers", type=int, default=1, help="Worker threads for MC trials")
    common.add_argument("--quiet", action="store_true", help="Hide progress bars")

    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser(Command.SWEEP.value, parents=[common], help="Leakage, delay and window-ratio sweep")
    commands.add_parser(Command.CLOCK.value, parents=[common], help="Replica clock period vs vdd")
    commands.add_parser(Command.CALIBRATE.value, parents=[common], help="Build the (c_l, c_r) lookup table")
    simulate = commands.add_parser(Command.SIMULATE.value, parents=[common], help="Replay reads with a lookup table")
    simulate.add_argument("--table", type=str, help="Lookup table (default: <out>/lookup_table.tsv)")
    simulate.add_argument("--trace", type=str, help="Trace file of 'R <array> <row> <hex>' lines")
    simulate.add_argument("--worst-case", action="store_true", help="Also read both worst-case patterns")
    simulate.add_argument("--per-read", action="store_true", help="Write the per-read CSV")
    simulate.add_argument("--expect-clean", action="store_true", help="Exit 2 when any bit error occurs")
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        run_config = parse_config(args.config).with_overrides(seed=args.seed, trials=args.trials, out=args.out)
        exp_config = ExperimentConfig(
            command=Command(args.command),
            run_config=run_config,
            workers=args.workers,
            expect_clean=getattr(args, "expect_clean", False),
            table=getattr(args, "table", None),
            trace=getattr(args, "trace", None),
            worst_case=getattr(args, "worst_case", False),
            per_read=getattr(args, "per_read", False),
            progress=not args.quiet,
        )
        experiment = Experiment(exp_config)
        if not experiment.setup():
            return EXIT_INVALID
        summary = experiment.run()
    except SimError as e:
        print(f"  [ERROR] {e}", file=sys.stderr)
        return EXIT_INVALID
    except KeyboardInterrupt:
        print("\n\n[INTERRUPTED]")
        return EXIT_INVALID
    return summary["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
