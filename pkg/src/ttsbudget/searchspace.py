"""Pipelines, allocations, and the budget-constrained allocation space.

An allocation assigns each pipeline stage a (model, sample-count) pair.  The
space of allocations whose summed budget fits under a total cap is finite;
this module counts it, streams it in a fixed order, samples it uniformly,
and unranks into it, all with semantics identical to a straightforward
nested-loop enumeration over prefix sums (so float boundary cases resolve
the same way everywhere).
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterator

from .costmodel import (
    DEFAULT_BASE,
    BaseConfig,
    CostMetric,
    ModelSpec,
    TaskShape,
    normalized_budget,
    price_cost,
)

# Counting deliberately stays within signed 64-bit range; astronomically
# larger spaces are reported instead of silently returned.
_COUNT_LIMIT = 2**63 - 1


class SearchSpaceError(ValueError):
    """Invalid pipeline/allocation structure or an infeasible request."""


class CountOverflowError(SearchSpaceError):
    """The valid-allocation count exceeds the 64-bit reporting limit."""


@dataclass(frozen=True)
class SubtaskSpec:
    """One pipeline stage: its token shape and candidate models."""

    name: str
    shape: TaskShape
    model_space: tuple[ModelSpec, ...]
    min_samples: int = 0
    max_samples_cap: int | None = None

    def __post_init__(self) -> None:
        if not self.model_space:
            raise SearchSpaceError(f"subtask {self.name!r}: empty model space")
        params = [m.params for m in self.model_space]
        if any(b <= a for a, b in zip(params, params[1:])):
            raise SearchSpaceError(
                f"subtask {self.name!r}: model space must be strictly ascending in params"
            )
        names = [m.name for m in self.model_space]
        if len(set(names)) != len(names):
            raise SearchSpaceError(f"subtask {self.name!r}: duplicate model names")
        if self.min_samples < 0:
            raise SearchSpaceError(f"subtask {self.name!r}: min_samples must be >= 0")
        if self.max_samples_cap is not None and self.max_samples_cap < self.min_samples:
            raise SearchSpaceError(
                f"subtask {self.name!r}: max_samples_cap below min_samples"
            )

    def model(self, name: str) -> ModelSpec:
        for m in self.model_space:
            if m.name == name:
                return m
        raise SearchSpaceError(f"subtask {self.name!r}: unknown model {name!r}")

    @property
    def smallest(self) -> ModelSpec:
        return self.model_space[0]

    @property
    def largest(self) -> ModelSpec:
        return self.model_space[-1]


@dataclass(frozen=True)
class PipelineSpec:
    """An ordered multi-stage pipeline plus its budget accounting choices."""

    subtasks: tuple[SubtaskSpec, ...]
    base: BaseConfig = DEFAULT_BASE
    metric: CostMetric = CostMetric.FLOPS_SIMPLIFIED
    main_metric_name: str = "main"
    name: str = "pipeline"

    def __post_init__(self) -> None:
        if not self.subtasks:
            raise SearchSpaceError("pipeline needs at least one subtask")
        names = [t.name for t in self.subtasks]
        if len(set(names)) != len(names):
            raise SearchSpaceError("subtask names must be unique")
        if self.metric is CostMetric.API_PRICE:
            missing = [
                m.name for t in self.subtasks for m in t.model_space if not m.has_prices
            ]
            if missing:
                raise SearchSpaceError(f"price metric requires prices; missing on {missing}")
        if self.metric is CostMetric.FLOPS_EXACT:
            missing = [
                m.name
                for t in self.subtasks
                for m in t.model_space
                if not m.has_architecture
            ]
            if missing:
                raise SearchSpaceError(
                    f"exact metric requires layers/hidden; missing on {missing}"
                )

    def subtask(self, name: str) -> SubtaskSpec:
        for t in self.subtasks:
            if t.name == name:
                return t
        raise SearchSpaceError(f"unknown subtask {name!r}")


@dataclass(frozen=True)
class Allocation:
    """One trial: an ordered (model name, sample count) per subtask."""

    entries: tuple[tuple[str, int], ...]

    def __str__(self) -> str:
        return " | ".join(f"{m}:{s}" for m, s in self.entries)


def validate_allocation(
    spec: PipelineSpec, alloc: Allocation, min_samples: int | None = None
) -> None:
    """Raise SearchSpaceError unless alloc is structurally valid for spec."""
    if len(alloc.entries) != len(spec.subtasks):
        raise SearchSpaceError(
            f"allocation has {len(alloc.entries)} entries for {len(spec.subtasks)} subtasks"
        )
    for (model_name, samples), task in zip(alloc.entries, spec.subtasks):
        task.model(model_name)  # raises on unknown model
        floor = _effective_min(task, min_samples)
        if samples < floor:
            raise SearchSpaceError(
                f"subtask {task.name!r}: samples {samples} below minimum {floor}"
            )
        if task.max_samples_cap is not None and samples > task.max_samples_cap:
            raise SearchSpaceError(
                f"subtask {task.name!r}: samples {samples} above cap {task.max_samples_cap}"
            )


def _effective_min(task: SubtaskSpec, min_samples: int | None) -> int:
    return task.min_samples if min_samples is None else max(task.min_samples, min_samples)


def subtask_budget(
    spec: PipelineSpec, task: SubtaskSpec, model: ModelSpec, samples: int
) -> float:
    """Budget of a single-stage configuration under the pipeline's metric."""
    if spec.metric is CostMetric.API_PRICE:
        return price_cost(model, samples, task.shape)
    return normalized_budget(model, samples, task.shape, spec.base)


def allocation_budget(spec: PipelineSpec, alloc: Allocation) -> float:
    """Total budget of an allocation: the sum over its stages."""
    if len(alloc.entries) != len(spec.subtasks):
        raise SearchSpaceError("allocation/subtask count mismatch")
    total = 0.0
    for (model_name, samples), task in zip(alloc.entries, spec.subtasks):
        total += subtask_budget(spec, task, task.model(model_name), samples)
    return total


def default_budget(spec: PipelineSpec) -> float:
    """Sum of one-pass costs of each subtask's largest model."""
    total = 0.0
    for task in spec.subtasks:
        total += subtask_budget(spec, task, task.largest, 1)
    return total


def min_subtask_budget(
    spec: PipelineSpec, task: SubtaskSpec, min_samples: int | None = None
) -> float:
    """Cheapest way to run one subtask: smallest model at its sample floor."""
    return subtask_budget(spec, task, task.smallest, _effective_min(task, min_samples))


def _max_s_under_prefix(
    spec: PipelineSpec,
    task: SubtaskSpec,
    model: ModelSpec,
    prefix: float,
    total_budget: float,
    floor: int,
) -> int | None:
    """Largest feasible sample count given the budget already spent upstream.

    The comparison is ``prefix + budget(S) <= total_budget`` with the same
    float arithmetic the enumeration loop uses, so counting, streaming and
    unranking always agree on boundary configurations.
    """
    def fits(s: int) -> bool:
        return prefix + subtask_budget(spec, task, model, s) <= total_budget

    if not fits(floor):
        return None
    if spec.metric is CostMetric.API_PRICE:
        per_sample = task.shape.gen_len * model.price_per_mtok_out / 1e6
        if per_sample <= 0:
            if task.max_samples_cap is None:
                raise SearchSpaceError(
                    f"model {model.name!r}: zero per-sample price makes the space "
                    "unbounded; set max_samples_cap"
                )
            return task.max_samples_cap if task.max_samples_cap >= floor else None
        base_cost = subtask_budget(spec, task, model, 0)
        s = max(floor, int((total_budget - prefix - base_cost) / per_sample))
    else:
        from .costmodel import budget_line

        slope, intercept = budget_line(model, task.shape, spec.base)
        s = max(floor, int((total_budget - prefix - intercept) / slope))
    while fits(s + 1):
        s += 1
    while s > floor and not fits(s):
        s -= 1
    if task.max_samples_cap is not None and s > task.max_samples_cap:
        s = task.max_samples_cap
    if s < floor:
        return None
    return s


def _quick_size_bound(
    spec: PipelineSpec, total_budget: float, min_samples: int | None
) -> int:
    """Cheap upper bound on the space size: product of per-subtask options."""
    bound = 1
    for i, task in enumerate(spec.subtasks):
        others = sum(
            min_subtask_budget(spec, t, min_samples)
            for j, t in enumerate(spec.subtasks)
            if j != i
        )
        floor = _effective_min(task, min_samples)
        options = 0
        for model in task.model_space:
            smax = _max_s_under_prefix(spec, task, model, others, total_budget, floor)
            if smax is not None:
                options += smax - floor + 1
        bound *= options
        if bound > _COUNT_LIMIT:
            return bound
    return bound


def count_valid(
    spec: PipelineSpec, total_budget: float, min_samples: int | None = None
) -> int:
    """Number of allocations whose total budget fits under total_budget.

    Counts exceeding the 64-bit limit are reported as CountOverflowError; a
    cheap product bound screens astronomically large spaces up front so the
    exact recursion is only attempted on spaces it can actually traverse.
    """
    if total_budget < 0:
        raise SearchSpaceError("total_budget must be >= 0")
    if _quick_size_bound(spec, total_budget, min_samples) > _COUNT_LIMIT:
        raise CountOverflowError(
            "valid-allocation count may exceed 2**63 - 1 (product bound)"
        )
    tasks = spec.subtasks

    def count_from(level: int, prefix: float) -> int:
        task = tasks[level]
        floor = _effective_min(task, min_samples)
        total = 0
        if level == len(tasks) - 1:
            for model in task.model_space:
                smax = _max_s_under_prefix(spec, task, model, prefix, total_budget, floor)
                if smax is not None:
                    total += smax - floor + 1
            return total
        for model in task.model_space:
            smax = _max_s_under_prefix(spec, task, model, prefix, total_budget, floor)
            if smax is None:
                continue
            for s in range(floor, smax + 1):
                total += count_from(
                    level + 1, prefix + subtask_budget(spec, task, model, s)
                )
                if total > _COUNT_LIMIT:
                    raise CountOverflowError("valid-allocation count exceeds 2**63 - 1")
        return total

    total = count_from(0, 0.0)
    if total > _COUNT_LIMIT:
        raise CountOverflowError("valid-allocation count exceeds 2**63 - 1")
    return total


def enumerate_valid(
    spec: PipelineSpec, total_budget: float, min_samples: int | None = None
) -> Iterator[Allocation]:
    """Stream every valid allocation in lexicographic (model, samples) order."""
    if total_budget < 0:
        raise SearchSpaceError("total_budget must be >= 0")
    tasks = spec.subtasks
    entry_stack: list[tuple[str, int]] = []

    def walk(level: int, prefix: float) -> Iterator[Allocation]:
        task = tasks[level]
        floor = _effective_min(task, min_samples)
        for model in task.model_space:
            smax = _max_s_under_prefix(spec, task, model, prefix, total_budget, floor)
            if smax is None:
                continue
            for s in range(floor, smax + 1):
                entry_stack.append((model.name, s))
                if level == len(tasks) - 1:
                    yield Allocation(tuple(entry_stack))
                else:
                    yield from walk(
                        level + 1, prefix + subtask_budget(spec, task, model, s)
                    )
                entry_stack.pop()

    yield from walk(0, 0.0)


def nth_valid(
    spec: PipelineSpec,
    total_budget: float,
    index: int,
    min_samples: int | None = None,
) -> Allocation:
    """The index-th allocation of enumerate_valid, found by counting (no scan)."""
    if index < 0:
        raise SearchSpaceError("index must be >= 0")
    tasks = spec.subtasks
    entries: list[tuple[str, int]] = []
    remaining = index
    prefix = 0.0
    for level, task in enumerate(tasks):
        floor = _effective_min(task, min_samples)
        chosen = None
        for model in task.model_space:
            smax = _max_s_under_prefix(spec, task, model, prefix, total_budget, floor)
            if smax is None:
                continue
            for s in range(floor, smax + 1):
                sub_prefix = prefix + subtask_budget(spec, task, model, s)
                if level == len(tasks) - 1:
                    block = 1
                else:
                    block = _count_suffix(spec, level + 1, sub_prefix, total_budget, min_samples)
                if remaining < block:
                    chosen = (model.name, s, sub_prefix)
                    break
                remaining -= block
            if chosen:
                break
        if chosen is None:
            raise SearchSpaceError("index out of range for the valid-allocation space")
        entries.append(chosen[:2])
        prefix = chosen[2]
    return Allocation(tuple(entries))


def _count_suffix(
    spec: PipelineSpec,
    level: int,
    prefix: float,
    total_budget: float,
    min_samples: int | None,
) -> int:
    tasks = spec.subtasks
    task = tasks[level]
    floor = _effective_min(task, min_samples)
    total = 0
    for model in task.model_space:
        smax = _max_s_under_prefix(spec, task, model, prefix, total_budget, floor)
        if smax is None:
            continue
        if level == len(tasks) - 1:
            total += smax - floor + 1
        else:
            for s in range(floor, smax + 1):
                total += _count_suffix(
                    spec,
                    level + 1,
                    prefix + subtask_budget(spec, task, model, s),
                    total_budget,
                    min_samples,
                )
    return total


# Rejection sampling proposes from the product of per-subtask option sets,
# which covers the valid set, so accepted draws are exactly uniform.  If the
# acceptance rate over the probe window drops below this threshold the
# sampler switches to unranking uniform indices, which is always exact.
_REJECTION_PROBE = 500
_REJECTION_MIN_RATE = 0.01


def sample_uniform(
    spec: PipelineSpec,
    total_budget: float,
    seed: int,
    n: int,
    min_samples: int | None = None,
) -> list[Allocation]:
    """Draw n allocations independently and uniformly from the valid set."""
    if n < 0:
        raise SearchSpaceError("n must be >= 0")
    if n == 0:
        return []
    rng = random.Random(seed)

    # Per-subtask options feasible when every other subtask is at its cheapest.
    options: list[list[tuple[str, int, int]]] = []  # (model, s_lo, s_hi)
    for i, task in enumerate(spec.subtasks):
        others_min = sum(
            min_subtask_budget(spec, t, min_samples)
            for j, t in enumerate(spec.subtasks)
            if j != i
        )
        floor = _effective_min(task, min_samples)
        opts = []
        for model in task.model_space:
            smax = _max_s_under_prefix(spec, task, model, others_min, total_budget, floor)
            if smax is not None:
                opts.append((model.name, floor, smax))
        if not opts:
            raise SearchSpaceError(f"subtask {task.name!r}: no feasible configuration")
        options.append(opts)
    weights = [[hi - lo + 1 for _, lo, hi in opts] for opts in options]
    totals = [sum(w) for w in weights]

    def draw_one() -> Allocation:
        entries = []
        for opts, w, tot in zip(options, weights, totals):
            pick = rng.randrange(tot)
            for (model_name, lo, _), width in zip(opts, w):
                if pick < width:
                    entries.append((model_name, lo + pick))
                    break
                pick -= width
        return Allocation(tuple(entries))

    out: list[Allocation] = []
    attempts = 0
    while len(out) < n:
        alloc = draw_one()
        attempts += 1
        if allocation_budget(spec, alloc) <= total_budget:
            out.append(alloc)
        if attempts >= _REJECTION_PROBE and len(out) / attempts < _REJECTION_MIN_RATE:
            break
    if len(out) < n:
        # Index-based fallback: exact uniform via unranking.
        space = count_valid(spec, total_budget, min_samples)
        if space == 0:
            raise SearchSpaceError("no valid allocation under the given budget")
        while len(out) < n:
            out.append(nth_valid(spec, total_budget, rng.randrange(space), min_samples))
    return out
