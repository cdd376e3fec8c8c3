"""Search-space tests: budgets, counting, enumeration, unranking, sampling."""

import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ttsbudget.costmodel import CostMetric, ModelSpec, TaskShape, normalized_budget
from ttsbudget.searchspace import (
    Allocation,
    CountOverflowError,
    PipelineSpec,
    SearchSpaceError,
    SubtaskSpec,
    allocation_budget,
    count_valid,
    default_budget,
    enumerate_valid,
    min_subtask_budget,
    nth_valid,
    sample_uniform,
    validate_allocation,
)

M3 = ModelSpec("llama-3b", 3e9)
M70 = ModelSpec("llama-70b", 70e9)


def chatdev_spec(min_samples=0):
    mk = lambda name, gen: SubtaskSpec(
        name, TaskShape(1024, gen), (M3, M70), min_samples=min_samples
    )
    return PipelineSpec(
        subtasks=(mk("code", 1024), mk("static", 512), mk("dynamic", 256)),
        name="chatdev",
    )


def tiny_spec():
    return PipelineSpec(
        subtasks=(SubtaskSpec("t", TaskShape(128, 64), (M3,)),), name="tiny"
    )


def wiki_spec():
    return PipelineSpec(
        subtasks=(
            SubtaskSpec(
                "retrieval",
                TaskShape(2048, 128),
                (ModelSpec("q7", 7e9), ModelSpec("q32", 32e9), ModelSpec("q72", 72e9)),
            ),
            SubtaskSpec(
                "qa",
                TaskShape(256, 64),
                (M3, ModelSpec("l8", 8e9), M70),
            ),
        ),
        name="wiki2",
    )


def brute_force_allocations(spec, total_budget, min_samples=None):
    """Oracle: full cross-product scan with a generous per-subtask sample cap."""
    per_task_options = []
    for task in spec.subtasks:
        floor = task.min_samples if min_samples is None else max(task.min_samples, min_samples)
        opts = []
        for model in task.model_space:
            s = floor
            while normalized_budget(model, s, task.shape, spec.base) <= total_budget:
                opts.append((model.name, s))
                s += 1
                if s > 100_000:
                    raise AssertionError("oracle runaway")
        per_task_options.append(opts)
    out = []
    for combo in itertools.product(*per_task_options):
        alloc = Allocation(tuple(combo))
        if allocation_budget(spec, alloc) <= total_budget:
            out.append(alloc)
    return out


class TestAllocationBudget:
    def test_chatdev_all_large_single_pass(self):
        spec = chatdev_spec()
        alloc = Allocation((("llama-70b", 1),) * 3)
        assert allocation_budget(spec, alloc) == pytest.approx(1767.33, abs=0.01)

    def test_base_unit_identity(self):
        spec = tiny_spec()
        assert allocation_budget(spec, Allocation((("llama-3b", 7),))) == pytest.approx(7)

    def test_wiki_shaped_sum(self):
        spec = wiki_spec()
        alloc = Allocation((("q72", 1), ("llama-70b", 1)))
        assert round(allocation_budget(spec, alloc)) == 929

    def test_unknown_model_rejected(self):
        with pytest.raises(SearchSpaceError):
            allocation_budget(tiny_spec(), Allocation((("nope", 1),)))

    def test_price_metric_sums_prices(self):
        cheap = ModelSpec("c", 1e9, price_per_mtok_in=0.1, price_per_mtok_out=0.2)
        spec = PipelineSpec(
            subtasks=(SubtaskSpec("s", TaskShape(100, 10), (cheap,)),),
            metric=CostMetric.API_PRICE,
        )
        got = allocation_budget(spec, Allocation((("c", 3),)))
        assert got == pytest.approx((100 * 0.1 + 3 * 10 * 0.2) / 1e6)


class TestDefaultBudget:
    def test_chatdev_value(self):
        assert default_budget(chatdev_spec()) == pytest.approx(1767.3333333, abs=1e-6)

    def test_wiki_value(self):
        assert round(default_budget(wiki_spec())) == 929

    def test_single_base_subtask(self):
        assert default_budget(tiny_spec()) == pytest.approx(1.0)


class TestCountValid:
    def test_chatdev_reference_count(self):
        spec = chatdev_spec()
        assert count_valid(spec, default_budget(spec), min_samples=0) == 1_854_841

    def test_unit_cost_enumeration(self):
        assert count_valid(tiny_spec(), 5.0, min_samples=0) == 6

    def test_budget_below_cheapest_is_empty(self):
        spec = chatdev_spec()
        cheapest = sum(min_subtask_budget(spec, t) for t in spec.subtasks)
        assert count_valid(spec, cheapest - 1e-6) == 0

    def test_min_samples_shrinks_the_space(self):
        spec = chatdev_spec()
        budget = 200.0
        assert count_valid(spec, budget, min_samples=1) <= count_valid(
            spec, budget, min_samples=0
        )

    def test_overflow_reported(self):
        huge = PipelineSpec(
            subtasks=tuple(
                SubtaskSpec(f"s{i}", TaskShape(128, 64), (ModelSpec("m", 1e5),))
                for i in range(8)
            )
        )
        with pytest.raises(CountOverflowError):
            count_valid(huge, 1e6)


class TestEnumerateAndUnrank:
    def test_tiny_order(self):
        got = list(enumerate_valid(tiny_spec(), 5.0, min_samples=0))
        assert [s for (_, s), in (a.entries for a in got)] == [0, 1, 2, 3, 4, 5]

    def test_every_stream_element_is_within_budget(self):
        spec = chatdev_spec()
        for alloc in itertools.islice(enumerate_valid(spec, 120.0), 500):
            assert allocation_budget(spec, alloc) <= 120.0

    def test_matches_brute_force_oracle(self):
        spec = wiki_spec()
        budget = 450.0
        oracle = brute_force_allocations(spec, budget)
        got = list(enumerate_valid(spec, budget))
        assert len(got) == len(oracle) == count_valid(spec, budget)
        assert set(got) == set(oracle)

    def test_nth_valid_agrees_with_stream(self):
        spec = wiki_spec()
        budget = 450.0
        stream = list(enumerate_valid(spec, budget))
        for idx in (0, 1, len(stream) // 2, len(stream) - 1):
            assert nth_valid(spec, budget, idx) == stream[idx]
        with pytest.raises(SearchSpaceError):
            nth_valid(spec, budget, len(stream))

    @given(
        budget=st.floats(5, 400),
        min_samples=st.sampled_from([None, 0, 1, 2]),
    )
    @settings(max_examples=25, deadline=None)
    def test_count_equals_stream_length(self, budget, min_samples):
        spec = wiki_spec()
        count = count_valid(spec, budget, min_samples=min_samples)
        stream = list(enumerate_valid(spec, budget, min_samples=min_samples))
        assert count == len(stream)
        for alloc in stream:
            validate_allocation(spec, alloc, min_samples=min_samples)


class TestBudgetMonotonicity:
    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=60)
    def test_upgrades_never_cost_less(self, seed):
        spec = wiki_spec()
        rng = random.Random(seed)
        entries = []
        for task in spec.subtasks:
            model = rng.choice(task.model_space)
            entries.append((model.name, rng.randrange(0, 50)))
        alloc = Allocation(tuple(entries))
        base_cost = allocation_budget(spec, alloc)
        index = rng.randrange(len(entries))
        task = spec.subtasks[index]
        model_names = [m.name for m in task.model_space]
        pos = model_names.index(entries[index][0])
        bumped = list(entries)
        if pos + 1 < len(model_names):
            bumped[index] = (model_names[pos + 1], entries[index][1])
            assert allocation_budget(spec, Allocation(tuple(bumped))) >= base_cost
        bumped = list(entries)
        bumped[index] = (entries[index][0], entries[index][1] + 1)
        assert allocation_budget(spec, Allocation(tuple(bumped))) > base_cost


class TestSampleUniform:
    def test_chi_square_against_uniform(self):
        spec = tiny_spec()
        draws = sample_uniform(spec, 5.0, seed=0, n=6000, min_samples=0)
        counts = [0] * 6
        for alloc in draws:
            counts[alloc.entries[0][1]] += 1
        # Each cell within 5% of the expected 1000.
        assert all(950 <= c <= 1050 for c in counts), counts
        chi2 = sum((c - 1000.0) ** 2 / 1000.0 for c in counts)
        assert chi2 < 15.09  # chi-square critical value, 5 dof, alpha=0.01

    def test_zero_draws(self):
        assert sample_uniform(tiny_spec(), 5.0, seed=1, n=0) == []

    def test_seed_determinism(self):
        spec = wiki_spec()
        a = sample_uniform(spec, 929.0, seed=42, n=50, min_samples=1)
        b = sample_uniform(spec, 929.0, seed=42, n=50, min_samples=1)
        assert a == b

    def test_all_draws_feasible(self):
        spec = wiki_spec()
        for alloc in sample_uniform(spec, 300.0, seed=3, n=200, min_samples=1):
            assert allocation_budget(spec, alloc) <= 300.0
            validate_allocation(spec, alloc, min_samples=1)

    def test_tight_budget_uses_exact_fallback(self):
        # Budget so tight that the rejection proposal almost never lands.
        spec = chatdev_spec(min_samples=0)
        cheapest = sum(min_subtask_budget(spec, t) for t in spec.subtasks)
        draws = sample_uniform(spec, cheapest + 0.5, seed=9, n=20)
        assert len(draws) == 20
        for alloc in draws:
            assert allocation_budget(spec, alloc) <= cheapest + 0.5

    def test_empty_space_raises(self):
        with pytest.raises(SearchSpaceError):
            sample_uniform(tiny_spec(), 0.5, seed=0, n=3, min_samples=1)


class TestSpecValidation:
    def test_model_space_must_ascend(self):
        with pytest.raises(SearchSpaceError):
            SubtaskSpec("bad", TaskShape(128, 64), (M70, M3))

    def test_duplicate_subtask_names_rejected(self):
        sub = SubtaskSpec("same", TaskShape(128, 64), (M3,))
        with pytest.raises(SearchSpaceError):
            PipelineSpec(subtasks=(sub, sub))

    def test_allocation_length_checked(self):
        with pytest.raises(SearchSpaceError):
            validate_allocation(wiki_spec(), Allocation((("q7", 1),)))

    def test_min_samples_floor_applies(self):
        spec = tiny_spec()
        with pytest.raises(SearchSpaceError):
            validate_allocation(spec, Allocation((("llama-3b", 0),)), min_samples=1)
