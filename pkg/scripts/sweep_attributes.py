"""Solve fraction against program length and against instruction count.

Generates one non-convex suite per attribute value, runs each method over
every suite and writes a long-format CSV grouped by length and by
instruction count. A raised-budget MCMC row can be added with --mcmc-budget.

    python scripts/sweep_attributes.py --out runs/sweep --tasks 10 --methods rlgts mcmc
"""

import argparse
from pathlib import Path

from rlgts.benchgen import BenchmarkSpec, build_suite, save_suite
from rlgts.harness import METHODS, RunConfig, sweep


def suite(out: Path, length: int, k: int, tasks: int, seed: int, slack: int) -> str:
    path = out / f"suite-L{length}-I{k}.json"
    if not path.exists():
        spec = BenchmarkSpec(length=length, max_length=length + slack, count=tasks, seed=seed,
                             n_instructions=k, keep="nonconvex")
        save_suite(build_suite(spec), path)
    return str(path)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", required=True)
    ap.add_argument("--methods", nargs="+", choices=METHODS, default=["rlgts", "mcmc", "bandit"])
    ap.add_argument("--lengths", nargs="+", type=int, default=[2, 3, 4, 5])
    ap.add_argument("--instructions", nargs="+", type=int, default=[2, 3, 17])
    ap.add_argument("--tasks", type=int, default=10)
    ap.add_argument("--slack", type=int, default=0, help="depth cap minus program length")
    ap.add_argument("--budget", type=int, default=20_000)
    ap.add_argument("--mcmc-budget", type=int, default=None, help="extra MCMC row with this budget")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    by_length = [suite(out, L, 2, args.tasks, args.seed, args.slack) for L in args.lengths]
    by_instr = [suite(out, 3, k, args.tasks, args.seed, args.slack) for k in args.instructions]
    for key, suites in (("length", by_length), ("instructions", by_instr)):
        configs = [RunConfig(m, s, max_proposals=args.budget, seed=args.seed, workers=args.workers)
                   for m in args.methods for s in suites]
        if args.mcmc_budget:
            configs += [RunConfig("mcmc", s, max_proposals=args.mcmc_budget, seed=args.seed, workers=args.workers)
                        for s in suites]
        table = sweep(configs, group_by=[key]).to_csv()
        (out / f"by-{key}.csv").write_text(table)
        print(table, end="")


if __name__ == "__main__":
    main()
