"""Command line entry point: ``python -m rlgts {gen,run,sweep,show}``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .benchgen import BenchmarkSpec, GenerationInfeasible, build_suite, suite_to_json
from .harness import GROUP_KEYS, METHODS, AggregateReport, RunConfig, UsageError, format_report, run_suite, sweep


def _add_run_flags(p: argparse.ArgumentParser, multi: bool) -> None:
    kw = {"action": "append", "required": True} if multi else {"required": True}
    p.add_argument("--method", choices=METHODS, **kw)
    p.add_argument("--suite", **kw, help="suite JSON written by 'gen'")
    p.add_argument("--budget", type=int, default=20_000, help="proposals per task")
    p.add_argument("--depth-cap", type=int, default=None, help="override each task's p")
    p.add_argument("--allow-short-cap", action="store_true", help="allow a depth cap below the task length")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--wall-time", action="store_true", help="record wall-clock seconds per task")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rlgts", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a benchmark suite")
    g.add_argument("--length", type=int, required=True, help="ground-truth program length")
    g.add_argument("--depth-cap", type=int, default=None, help="p stored in each task (default: length)")
    g.add_argument("--instructions", type=int, default=2, help="instructions per task, drawn at random")
    g.add_argument("--opcodes", nargs="+", default=None, help="fixed instruction set instead of random draws")
    g.add_argument("--vars", type=int, default=4)
    g.add_argument("--examples", type=int, default=5)
    g.add_argument("--count", type=int, default=100)
    g.add_argument("--keep", choices=("all", "nonconvex", "convex"), default="all")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="suite JSON path")

    r = sub.add_parser("run", help="run one method over a suite")
    _add_run_flags(r, multi=False)
    r.add_argument("--label", default=None, help="report name (default: method, plus budget if non-default)")
    r.add_argument("--out", default=None, help="directory for the JSON report")

    s = sub.add_parser("sweep", help="run every (method, suite) pair and write a grouped CSV table")
    _add_run_flags(s, multi=True)
    s.add_argument("--group-by", nargs="+", choices=GROUP_KEYS, default=list(GROUP_KEYS))
    s.add_argument("--reports", default=None, help="directory for per-run JSON reports")
    s.add_argument("--out", default=None, help="CSV path (default: stdout)")

    w = sub.add_parser("show", help="pretty-print JSON reports")
    w.add_argument("reports", nargs="+")
    return parser


def _config(args, method: str, suite: str, out=None, label=None) -> RunConfig:
    return RunConfig(
        method=method, suite=suite, max_proposals=args.budget, depth_cap=args.depth_cap, seed=args.seed,
        out=out, label=label, workers=args.workers, record_wall_time=args.wall_time,
        allow_short_cap=args.allow_short_cap,
    )


def _progress(result) -> None:
    print(f"  {result.task_id}: {'solved' if result.solved else result.stop_reason} "
          f"after {result.proposals_used} proposals", file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "gen":
            spec = BenchmarkSpec(
                length=args.length, max_length=args.depth_cap or args.length, n_vars=args.vars,
                n_examples=args.examples, count=args.count, seed=args.seed,
                instructions=tuple(args.opcodes) if args.opcodes else None,
                n_instructions=args.instructions, keep=args.keep,
            )
            bench = build_suite(spec)
            with open(args.out, "x") as fh:
                fh.write(suite_to_json(bench))
            print(f"wrote {len(bench.tasks)} tasks ({sum(bench.convex)} convex) to {args.out}")
        elif args.command == "run":
            report = run_suite(_config(args, args.method, args.suite, args.out, args.label), _progress)
            print(format_report(report), end="")
        elif args.command == "sweep":
            configs = [_config(args, m, s, args.reports) for m in args.method for s in args.suite]
            table = sweep(configs, args.group_by, _progress).to_csv()
            if args.out:
                with open(args.out, "x") as fh:
                    fh.write(table)
            else:
                print(table, end="")
        elif args.command == "show":
            for path in args.reports:
                print(format_report(AggregateReport.load(Path(path))), end="")
    except FileExistsError as e:
        parser.error(f"refusing to overwrite {e.filename}")
    except (UsageError, GenerationInfeasible, ValueError, OSError) as e:
        parser.error(str(e))
    return 0
