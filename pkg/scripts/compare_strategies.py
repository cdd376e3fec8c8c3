#!/usr/bin/env python3
"""Compare search strategies over seeded synthetic environments.

Runs each strategy for a fixed trial budget on a set of preset seeds,
measures how close each gets to the exhaustive-grid optimum and how many
trials it takes to come within 1% of it, and writes per-seed trajectories
plus a summary CSV.

Example:
    python scripts/compare_strategies.py --preset retrieval-qa --seeds 20 \
        --trials 50 --out results/
"""

from __future__ import annotations

import argparse
import csv
import statistics
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from ttsbudget.environment import Mode, grid_truth, make_preset
from ttsbudget.searchspace import default_budget
from ttsbudget.strategies import (
    InsightStrategy,
    RandomStrategy,
    SurrogateStrategy,
    run_search,
)

STRATEGIES = {
    "random": RandomStrategy,
    "insight": InsightStrategy,
    "surrogate": SurrogateStrategy,
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--preset", default="retrieval-qa")
    parser.add_argument("--seeds", type=int, default=20)
    parser.add_argument("--trials", type=int, default=50)
    parser.add_argument("--batch-size", type=int, default=5)
    parser.add_argument("--out", default="results")
    args = parser.parse_args()

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    summary_rows = []
    trials_to_1pct: dict[str, list[int]] = {name: [] for name in STRATEGIES}

    for seed in range(args.seeds):
        env = make_preset(args.preset, seed)
        budget = default_budget(env.spec)
        opt_alloc, optimum = grid_truth(env, budget)
        test_env = env.with_mode(Mode.TEST)
        for name, cls in STRATEGIES.items():
            archive = run_search(
                cls(), env, env.spec, budget,
                max_trials=args.trials, batch_size=args.batch_size, seed=seed,
            )
            best_test = archive.meta["report"][0]["test_score"]
            reached = args.trials + 1
            best_so_far = float("-inf")
            with (outdir / f"{args.preset}_s{seed}_{name}.csv").open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["trial", "test_score", "best_so_far"])
                for i, rec in enumerate(archive.records, start=1):
                    score = test_env.evaluate(rec.allocation).main_metric
                    best_so_far = max(best_so_far, score)
                    if reached > args.trials and score >= 0.99 * optimum:
                        reached = i
                    writer.writerow([i, repr(score), repr(best_so_far)])
            trials_to_1pct[name].append(reached)
            summary_rows.append(
                [args.preset, seed, name, repr(optimum), repr(best_test),
                 repr(best_test / optimum), reached]
            )
            print(
                f"seed {seed:2d} {name:10s} best {best_test:.4f} "
                f"({best_test / optimum:6.1%} of optimum {optimum:.4f}, "
                f"grid argmax {opt_alloc}) trials-to-1%: {reached}"
            )

    with (outdir / "summary.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["preset", "seed", "strategy", "optimum", "best_test", "ratio", "trials_to_1pct"]
        )
        writer.writerows(summary_rows)
    print("\nmedian trials to within 1% of the grid optimum:")
    for name, values in trials_to_1pct.items():
        print(f"  {name:10s} {statistics.median(values)}")
    print(f"\nwrote {outdir}/summary.csv and per-seed trajectories")
    return 0


if __name__ == "__main__":
    sys.exit(main())
