"""Surrogate-model strategy tests: EI closed form, GP posterior, proposals."""

import math

import numpy as np
import pytest

from ttsbudget.archive import Archive, TrialRecord
from ttsbudget.environment import EvalResult, make_preset
from ttsbudget.searchspace import Allocation, allocation_budget, default_budget
from ttsbudget.strategies import SurrogateStrategy, expected_improvement
from ttsbudget.strategies.surrogate import _sample_ceilings, encode_allocation


class TestExpectedImprovement:
    def test_closed_form_value(self):
        # mean 0.6, sd 0.1 against best 0.5: z = 1,
        # EI = 0.1*Phi(1) + 0.1*phi(1) ~ 0.1083
        assert expected_improvement(0.6, 0.1, 0.5) == pytest.approx(0.10833, abs=2e-4)

    def test_known_point_has_no_improvement_value(self):
        # zero deviation at or below the incumbent is worthless
        assert expected_improvement(0.5, 0.0, 0.5) == 0.0
        assert expected_improvement(0.4, 0.0, 0.5) == 0.0
        assert expected_improvement(0.5, 1e-12, 0.5) < 1e-9

    def test_positive_for_uncertain_candidates(self):
        assert expected_improvement(0.5, 0.2, 0.5) > 0.0

    def test_monotone_in_mean(self):
        lo = expected_improvement(0.4, 0.1, 0.5)
        hi = expected_improvement(0.6, 0.1, 0.5)
        assert hi > lo


def _archive_with(spec, rows):
    archive = Archive()
    for i, (entries, score) in enumerate(rows):
        alloc = Allocation(entries)
        archive.append(
            TrialRecord(
                id=i,
                stage=0,
                strategy="x",
                allocation=alloc,
                budget=allocation_budget(spec, alloc),
                result=EvalResult((score,) * len(entries), score, 0.0),
            )
        )
    return archive


class TestSurrogateStrategy:
    def test_cold_start_is_uniform_random(self):
        env = make_preset("retrieval-qa", 0)
        budget = default_budget(env.spec)
        strategy = SurrogateStrategy()
        archive = Archive()
        batch = strategy.propose(archive, env.spec, budget, 5, seed=3)
        assert len(batch) == 5
        for alloc in batch:
            assert allocation_budget(env.spec, alloc) <= budget

    def test_proposals_deduplicate_against_archive(self):
        env = make_preset("retrieval-qa", 0)
        budget = default_budget(env.spec)
        strategy = SurrogateStrategy()
        rows = [
            ((("ret-72b", 1), ("qa-3b", 10)), 0.5),
            ((("ret-72b", 1), ("qa-3b", 20)), 0.6),
            ((("ret-32b", 3), ("qa-8b", 10)), 0.3),
            ((("ret-7b", 30), ("qa-3b", 40)), 0.2),
        ]
        archive = _archive_with(env.spec, rows)
        batch = strategy.propose(archive, env.spec, budget, 5, seed=3)
        seen = {r.allocation for r in archive.records}
        assert all(alloc not in seen for alloc in batch)

    def test_posterior_interpolates_observations(self):
        strategy = SurrogateStrategy()
        x = np.array([[0.0], [1.0]])
        y = np.array([0.2, 0.8])
        mean, std = strategy._posterior(x, y, x)
        assert mean == pytest.approx(y, abs=1e-2)
        assert np.all(std < 0.05)

    def test_posterior_uncertain_far_from_data(self):
        strategy = SurrogateStrategy()
        x = np.array([[0.0], [0.1]])
        y = np.array([0.2, 0.25])
        _, std_near = strategy._posterior(x, y, np.array([[0.05]]))
        _, std_far = strategy._posterior(x, y, np.array([[3.0]]))
        assert std_far[0] > std_near[0]

    def test_encoding_layout(self):
        env = make_preset("retrieval-qa", 0)
        budget = default_budget(env.spec)
        ceilings = _sample_ceilings(env.spec, budget)
        alloc = Allocation((("ret-32b", 4), ("qa-3b", 16)))
        vec = encode_allocation(env.spec, alloc, ceilings)
        assert len(vec) == (3 + 1) * 2
        assert list(vec[:3]) == [0.0, 1.0, 0.0]  # one-hot middle retrieval model
        assert 0.0 <= vec[3] <= 1.0
        assert list(vec[4:7]) == [1.0, 0.0, 0.0]
        expected = math.log1p(16) / math.log1p(ceilings[1])
        assert vec[7] == pytest.approx(expected)
