"""Run (or resume) a JSON experiment plan; see scripts/plans/ for examples.

    python scripts/run_plan.py scripts/plans/crossing_grid.json --workers 2
"""

import argparse

from slabperc.harness import ExperimentPlan, run_plan


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("plan")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    plan = ExperimentPlan.load(args.plan)
    for rec in run_plan(plan, args.workers):
        print(f"{rec.experiment} {rec.params} -> {rec.estimate:.4f} ({rec.ci95[0]:.4f}, {rec.ci95[1]:.4f})")


if __name__ == "__main__":
    main()
