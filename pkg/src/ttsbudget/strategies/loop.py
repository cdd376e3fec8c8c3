"""The shared search loop: propose, evaluate on the train surface, archive.

Each stage asks the strategy for a batch, evaluates it in Train mode, logs
the records, and feeds them back to the strategy.  Duplicate and infeasible
proposals are re-requested a bounded number of times; leftover duplicates
are then evaluated anyway, while a stage that still has no feasible
proposal raises.  After the trial budget is exhausted the top archived
allocations are re-scored on the Test surface and stored in the archive
metadata.
"""

from __future__ import annotations

import time

from ..archive import Archive, TrialRecord
from ..environment import Mode
from ..searchspace import (
    Allocation,
    PipelineSpec,
    SearchSpaceError,
    allocation_budget,
    validate_allocation,
)
from .base import Strategy, StrategyError, derive_seed

_DUPLICATE_RETRIES = 5
_BUDGET_SLACK = 1e-9  # forgive float dust when validating proposals


def _check_proposal(
    spec: PipelineSpec, alloc: Allocation, total_budget: float
) -> float:
    validate_allocation(spec, alloc, min_samples=1)
    budget = allocation_budget(spec, alloc)
    if budget > total_budget * (1 + _BUDGET_SLACK) + _BUDGET_SLACK:
        raise StrategyError(
            f"proposed allocation {alloc} costs {budget:.3f} > budget {total_budget:.3f}"
        )
    return budget


def run_search(
    strategy: Strategy,
    env,
    spec: PipelineSpec,
    total_budget: float,
    max_trials: int = 50,
    batch_size: int = 5,
    seed: int = 0,
    report_top_k: int = 5,
    clock=time.time,
) -> Archive:
    """Run one seeded search and return its archive (with a test-mode report).

    The environment must evaluate in Train mode if it distinguishes modes;
    the final report re-evaluates the top-k archived allocations in Test
    mode when the environment supports it.
    """
    if max_trials < 1:
        raise ValueError("max_trials must be >= 1")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    archive = Archive(
        meta={
            "strategy": strategy.name,
            "total_budget": total_budget,
            "max_trials": max_trials,
            "batch_size": batch_size,
            "seed": seed,
            "pipeline": spec.name,
        }
    )
    stage = 0
    while len(archive.records) < max_trials:
        want = min(batch_size, max_trials - len(archive.records))
        guidelines_before = len(archive.guidelines)
        batch = strategy.propose(archive, spec, total_budget, want, derive_seed(seed, stage))
        guideline_ref = (
            archive.guidelines[-1].id if len(archive.guidelines) > guidelines_before else None
        )

        def feasible(alloc: Allocation) -> bool:
            try:
                _check_proposal(spec, alloc, total_budget)
            except (StrategyError, SearchSpaceError):
                return False
            return True

        # Duplicate or infeasible proposals are re-requested a bounded number
        # of times; leftover duplicates are then evaluated anyway, infeasible
        # ones never are.
        accepted: list[Allocation] = []
        infeasible = 0
        pool = list(batch)
        attempt = 0
        while True:
            for alloc in pool:
                if len(accepted) == want:
                    break
                if not feasible(alloc):
                    infeasible += 1
                elif not archive.seen(alloc) and alloc not in accepted:
                    accepted.append(alloc)
            if len(accepted) == want or attempt >= _DUPLICATE_RETRIES:
                break
            attempt += 1
            pool = strategy.propose(
                archive, spec, total_budget, want - len(accepted),
                derive_seed(seed, stage, attempt),
            )
        for alloc in pool:  # retries exhausted: accept feasible duplicates
            if len(accepted) == want:
                break
            if feasible(alloc) and alloc not in accepted:
                accepted.append(alloc)
        if not accepted:
            raise StrategyError(
                f"strategy {strategy.name!r} produced no usable proposal at stage "
                f"{stage} after {_DUPLICATE_RETRIES} retries "
                f"({infeasible} infeasible proposals seen)"
            )

        new_records = []
        for alloc in accepted:
            budget = _check_proposal(spec, alloc, total_budget)
            result = env.evaluate(alloc)
            record = TrialRecord(
                id=archive.next_trial_id(),
                stage=stage,
                strategy=strategy.name,
                allocation=alloc,
                budget=budget,
                result=result,
                guideline_ref=guideline_ref,
                timestamp=clock(),
            )
            archive.append(record)
            new_records.append(record)
        strategy.on_feedback(new_records)
        stage += 1

    archive.meta["report"] = final_report(archive, env, report_top_k)
    return archive


def final_report(archive: Archive, env, top_k: int = 5) -> list[dict]:
    """Re-evaluate the top-k archived allocations on the test surface.

    Entries come back ordered by test score, so the first entry is the run's
    final answer.
    """
    test_env = env.with_mode(Mode.TEST) if hasattr(env, "with_mode") else env
    report = []
    for rec in archive.best(top_k):
        test_result = test_env.evaluate(rec.allocation)
        report.append(
            {
                "trial_id": rec.id,
                "allocation": [[m, s] for m, s in rec.allocation.entries],
                "budget": rec.budget,
                "train_score": rec.result.main_metric,
                "test_score": test_result.main_metric,
            }
        )
    report.sort(key=lambda item: (-item["test_score"], item["budget"], item["trial_id"]))
    return report
