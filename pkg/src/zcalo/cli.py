"""Command line front end.

Subcommands: generate, analyze, compare.  Exit codes: 0 success,
1 runtime/data error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ConfigError, EventParseError, EventValidationError
from .pipeline import CHANNELS, RunConfig, run_analyze, run_compare, run_generate


def _add_run_args(sub):
    sub.add_argument("--config", action="append", default=[],
                     help="extra config file (repeatable; later files win)")
    sub.add_argument("--seed", type=int, default=1,
                     help="master seed, drives every random stream")
    sub.add_argument("--events", type=int, default=1000,
                     help="events per forced sample (or per energy bin)")
    sub.add_argument("--scenario", default="s3", help="detector scenario name")
    sub.add_argument("--channel", default="ds_pi", choices=CHANNELS)
    sub.add_argument("--out", default="out", help="output directory")
    sub.add_argument("--threads", type=int, default=1,
                     help="worker threads (results independent of the count)")


def _run_config(args) -> RunConfig:
    return RunConfig(
        master_seed=args.seed,
        n_events=args.events,
        scenario_name=args.scenario,
        channel=args.channel,
        out_dir=Path(args.out),
        config_paths=list(args.config),
        n_z=getattr(args, "n_z", 1e9),
        threads=args.threads,
        input_path=Path(args.input) if getattr(args, "input", None) else None,
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="zcalo",
        description="Toy Z-peak generation, detector response and B-decay "
                    "benchmark analyses")
    subs = parser.add_subparsers(dest="command", required=True)

    p_gen = subs.add_parser("generate", help="write a signal event file")
    _add_run_args(p_gen)

    p_ana = subs.add_parser("analyze", help="run one channel analysis")
    _add_run_args(p_ana)
    p_ana.add_argument("--input", default=None,
                       help="existing event file (otherwise generate inline)")
    p_ana.add_argument("--n-z", type=float, default=1e9, dest="n_z",
                       help="number of Z decays for yield scaling")

    p_cmp = subs.add_parser("compare", help="merge two or more analyze runs")
    p_cmp.add_argument("run_dirs", nargs="+",
                       help="at least two analyze output directories")
    p_cmp.add_argument("--out", default="out/compare", help="output directory")

    args = parser.parse_args(argv)

    try:
        if args.command == "generate":
            run_generate(_run_config(args))
        elif args.command == "analyze":
            out = run_analyze(_run_config(args))
            print(f"analysis written to {out['run_dir']}")
        elif args.command == "compare":
            out = run_compare([Path(d) for d in args.run_dirs], Path(args.out))
            print(out["text"], end="")
            print(f"comparison written to {out['out_dir']}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (EventParseError, EventValidationError, FileNotFoundError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
