#!/usr/bin/env python3
"""Search behaviour under tightened and loosened total budgets.

Scales the default budget of a preset by a set of factors (a low budget
forces hard trade-offs between stages; a high one inflates the space) and
reports, per factor, the grid optimum, the space size, and how close each
strategy gets within the trial budget.

Example:
    python scripts/budget_sensitivity.py --preset retrieval-qa \
        --factors 0.55 1.0 2.0 --seeds 5 --out results/budgets.csv
"""

from __future__ import annotations

import argparse
import csv
import statistics
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from ttsbudget.environment import grid_truth, make_preset
from ttsbudget.searchspace import count_valid, default_budget
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
    parser.add_argument("--factors", type=float, nargs="+", default=[0.55, 1.0, 2.0])
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--trials", type=int, default=50)
    parser.add_argument("--out", default="results/budget_sensitivity.csv")
    args = parser.parse_args()

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    for factor in args.factors:
        ratios: dict[str, list[float]] = {name: [] for name in STRATEGIES}
        space = optimum = None
        for seed in range(args.seeds):
            env = make_preset(args.preset, seed)
            budget = default_budget(env.spec) * factor
            space = count_valid(env.spec, budget, min_samples=1)
            _, optimum = grid_truth(env, budget)
            for name, cls in STRATEGIES.items():
                archive = run_search(
                    cls(), env, env.spec, budget,
                    max_trials=args.trials, batch_size=5, seed=seed,
                )
                best_test = archive.meta["report"][0]["test_score"]
                ratios[name].append(best_test / optimum)
        for name, values in ratios.items():
            med = statistics.median(values)
            rows.append([args.preset, factor, space, name, repr(med)])
            print(
                f"factor {factor:4.2f} (space {space:9d}) {name:10s} "
                f"median best/optimum = {med:.4f}"
            )

    with out_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["preset", "budget_factor", "space_size", "strategy", "median_ratio"])
        writer.writerows(rows)
    print(f"\nwrote {out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
