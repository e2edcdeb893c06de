"""Desk-scale method comparison on non-convex length-3 suites.

Builds a two-instruction suite and an all-instruction suite, runs each
requested (method, suite, depth cap) cell and writes per-run JSON reports
plus one grouped CSV table.

    python scripts/desk_comparison.py --out runs/desk --tasks 20
"""

import argparse
import sys
import time
from pathlib import Path

from rlgts.benchgen import BenchmarkSpec, build_suite, save_suite
from rlgts.harness import AggregateReport, RunConfig, SweepReport, group_rows, report_path, run_suite

CELLS = {
    "trend": [("rlgts", "i2", 6), ("qonly", "i2", 6), ("bandit", "i2", 6)],
    "instructions": [("mcmc", "i17", 6), ("rlgts", "i17", 6)],
    "depth": [("mcmc", "i2", 3), ("mcmc", "i2", 6), ("rlgts", "i2", 3), ("rlgts", "i2", 6)],
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", required=True)
    ap.add_argument("--tasks", type=int, default=20)
    ap.add_argument("--suite-seed", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--budget", type=int, default=20_000)
    ap.add_argument("--experiments", nargs="+", choices=tuple(CELLS), default=list(CELLS))
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    suites = {}
    for key, k in (("i2", 2), ("i17", 17)):
        path = out / f"suite-L3-{key}.json"
        if not path.exists():
            spec = BenchmarkSpec(length=3, max_length=6, count=args.tasks, seed=args.suite_seed,
                                 n_instructions=k, keep="nonconvex")
            save_suite(build_suite(spec), path)
        suites[key] = str(path)

    cells = []
    for exp in args.experiments:
        cells.extend(c for c in CELLS[exp] if c not in cells)
    reports = []
    for method, suite, p in cells:
        label = f"{method}-{suite}-p{p}"
        config = RunConfig(method, suites[suite], max_proposals=args.budget, depth_cap=p, seed=args.seed,
                           out=str(out / "reports"), label=label, record_wall_time=True)
        t0 = time.monotonic()
        try:
            rep = run_suite(config)
        except FileExistsError:
            rep = AggregateReport.load(report_path(config.out, label, args.seed))
        reports.append(rep)
        print(f"{label:<20} solved {rep.n_solved:>2}/{rep.n_tasks}  ({time.monotonic() - t0:.0f}s)", flush=True)
    table = SweepReport(reports, group_rows(reports, ["length"])).to_csv()
    (out / "summary.csv").write_text(table)
    sys.stdout.write(table)


if __name__ == "__main__":
    main()
