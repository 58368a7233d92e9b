"""Run the crash-injection suite in each persistence mode and print summaries."""

import argparse

from pmgraph.crashsuite import CrashSuiteConfig, run_crash_suite
from pmgraph.pm_region import CrashPlan


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--edges", type=int, default=2000)
    ap.add_argument("--points", type=int, help="sample this many crash points instead of all")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    cfg = CrashSuiteConfig(edges=args.edges, seed=args.seed)
    plans = {"strict": CrashPlan.exhaustive(),
             "torn": CrashPlan.exhaustive(torn_writes=True, seed=args.seed)}
    for name, plan in plans.items():
        rep = run_crash_suite(cfg, plan, points=args.points)
        print(rep.summary(), f"[{rep.elapsed:.1f}s]")
        if rep.failures:
            print("  first failure:", rep.first_failure)


if __name__ == "__main__":
    main()
