"""Strategy interface and the random-search baseline."""

from __future__ import annotations

from hashlib import blake2b
from typing import Iterable, Protocol, runtime_checkable

from ..archive import Archive, TrialRecord
from ..searchspace import Allocation, PipelineSpec, sample_uniform


class StrategyError(RuntimeError):
    """A strategy failed to produce usable proposals."""


@runtime_checkable
class Strategy(Protocol):
    """A search strategy: proposes allocations, digests feedback.

    Proposals must stay within the total budget and use at least one sample
    per subtask; the search loop validates both.
    """

    name: str

    def propose(
        self,
        archive: Archive,
        spec: PipelineSpec,
        total_budget: float,
        batch_size: int,
        seed: int,
    ) -> list[Allocation]: ...

    def on_feedback(self, records: Iterable[TrialRecord]) -> None: ...


def derive_seed(*parts: int | str) -> int:
    """Stable, well-mixed integer seed from structured parts."""
    key = "/".join(str(p) for p in parts)
    return int.from_bytes(blake2b(key.encode(), digest_size=8).digest(), "big")


class RandomStrategy:
    """Uniform random search over the feasible space, one-sample floor."""

    name = "random"

    def propose(
        self,
        archive: Archive,
        spec: PipelineSpec,
        total_budget: float,
        batch_size: int,
        seed: int,
    ) -> list[Allocation]:
        return sample_uniform(spec, total_budget, seed, batch_size, min_samples=1)

    def on_feedback(self, records: Iterable[TrialRecord]) -> None:
        pass


def random_propose(
    spec: PipelineSpec, total_budget: float, batch_size: int, seed: int
) -> list[Allocation]:
    """Module-level convenience wrapper around the random strategy."""
    return sample_uniform(spec, total_budget, seed, batch_size, min_samples=1)
