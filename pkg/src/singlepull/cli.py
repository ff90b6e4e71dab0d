"""Command-line experiment runner.

    singlepull --config experiment.json [--out DIR] [--seeds A..B]
               [--policies spi,random] [--episodes N]
               [--resample-instances M] [--dump-trajectories] [--timing]
               [--sweep-rho 2,5,10,20]

Exit codes: 0 success, 2 config error, 3 solver failure, 4 constraint-audit
failure (the simulator's feasibility authority was breached).
"""

from __future__ import annotations

import argparse
import sys

from .experiments import (
    ConfigError,
    load_config,
    run_experiment,
    sweep_rho,
    time_policies,
)
from .policies import POLICY_NAMES
from .simulator import InfeasibleAction
from .simplex import SolverStall

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_AUDIT = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="singlepull",
        description="Run single-pull bandit policy experiments from a JSON config.",
    )
    parser.add_argument("--config", required=True, help="experiment config path")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seeds", help="instance seed range A..B inclusive")
    parser.add_argument("--policies", help="comma-separated policy list (overrides config)")
    parser.add_argument("--episodes", type=int, help="episodes per evaluation")
    parser.add_argument("--resample-instances", type=int,
                        help="number of instance draws (seeds 0..M-1)")
    parser.add_argument("--dump-trajectories", action="store_true",
                        help="write per-(episode, t, arm) records to trajectories.jsonl")
    parser.add_argument("--timing", action="store_true",
                        help="measure wall clocks and write timing.csv")
    parser.add_argument("--sweep-rho", help="comma-separated ascending rho list; "
                                            "writes gap_curve.csv instead of results.csv")
    return parser


def _parse_seed_range(text: str) -> list[int]:
    try:
        a, b = text.split("..")
        lo, hi = int(a), int(b)
    except ValueError:
        raise ConfigError(f"--seeds expects A..B, got {text!r}") from None
    if hi < lo:
        raise ConfigError(f"--seeds range is empty: {text!r}")
    return list(range(lo, hi + 1))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.out:
            config.out_dir = args.out
        if args.seeds:
            config.instance_seeds = _parse_seed_range(args.seeds)
        if args.policies:
            names = [p.strip() for p in args.policies.split(",") if p.strip()]
            bad = [p for p in names if p not in POLICY_NAMES]
            if bad:
                raise ConfigError(f"unknown policies: {bad}")
            config.policies = names
        if args.episodes is not None:
            if args.episodes < 2:
                raise ConfigError("--episodes must be at least 2")
            config.episodes = args.episodes
        if args.resample_instances is not None:
            config.instance_seeds = list(range(args.resample_instances))
        if args.dump_trajectories:
            config.dump_trajectories = True
        if args.timing:
            config.measure_runtime = True
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.sweep_rho:
            rho_list = [int(r) for r in args.sweep_rho.split(",") if r.strip()]
            rows, slope = sweep_rho(config, rho_list)
            print(f"wrote {config.out_dir}/gap_curve.csv (log-log slope {slope:.3f})")
        else:
            rows = run_experiment(config)
            print(f"wrote {config.out_dir}/results.csv ({len(rows)} rows)")
            if config.measure_runtime:
                time_policies(config)
                print(f"wrote {config.out_dir}/timing.csv")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleAction as exc:
        print(f"constraint audit failure: {exc}", file=sys.stderr)
        return EXIT_AUDIT
    except SolverStall as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
