"""Gaussian-process surrogate search with expected improvement.

Allocations are encoded as one-hot model indicators per subtask plus a
log-compressed sample count normalized to [0, 1].  A squared-exponential GP
fits the archived (encoding, score) pairs; each stage proposes the
candidates with the highest expected improvement from a fresh uniform pool.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ..archive import Archive, TrialRecord
from ..costmodel import max_samples
from ..searchspace import (
    Allocation,
    PipelineSpec,
    min_subtask_budget,
    sample_uniform,
)
from .base import derive_seed


@dataclass(frozen=True)
class SurrogateConfig:
    length_scale: float = 0.3
    jitter: float = 1e-6
    candidate_pool: int = 512
    min_observations: int = 3

    def __post_init__(self) -> None:
        if self.length_scale <= 0:
            raise ValueError("length_scale must be > 0")
        if self.candidate_pool < 1:
            raise ValueError("candidate_pool must be >= 1")


def _phi(z: float) -> float:
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def _cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def expected_improvement(mean: float, std: float, best: float) -> float:
    """E[max(0, f - best)] for f ~ Normal(mean, std)."""
    if std <= 0:
        return max(0.0, mean - best)
    z = (mean - best) / std
    return (mean - best) * _cdf(z) + std * _phi(z)


def _sample_ceilings(spec: PipelineSpec, total_budget: float) -> list[int]:
    """Per-subtask largest feasible sample count, for encoding normalization."""
    ceilings = []
    for i, task in enumerate(spec.subtasks):
        others = sum(
            min_subtask_budget(spec, t, 1)
            for j, t in enumerate(spec.subtasks)
            if j != i
        )
        cap = total_budget - others
        best = 1
        for model in task.model_space:
            smax = max_samples(model, task.shape, cap, spec.base)
            if smax is not None:
                best = max(best, smax)
        ceilings.append(best)
    return ceilings


def encode_allocation(
    spec: PipelineSpec, alloc: Allocation, ceilings: list[int]
) -> np.ndarray:
    """One-hot model per subtask plus normalized log(1 + samples)."""
    parts: list[float] = []
    for (model_name, samples), task, ceiling in zip(
        alloc.entries, spec.subtasks, ceilings
    ):
        onehot = [0.0] * len(task.model_space)
        for idx, model in enumerate(task.model_space):
            if model.name == model_name:
                onehot[idx] = 1.0
                break
        parts.extend(onehot)
        parts.append(math.log1p(samples) / math.log1p(max(ceiling, 1)))
    return np.asarray(parts, dtype=float)


class SurrogateStrategy:
    """GP-with-EI proposals; uniform random until enough observations exist."""

    name = "surrogate"

    def __init__(self, config: SurrogateConfig | None = None) -> None:
        self.config = config or SurrogateConfig()
        self._ceilings: list[int] | None = None

    def on_feedback(self, records: Iterable[TrialRecord]) -> None:
        pass

    def propose(
        self,
        archive: Archive,
        spec: PipelineSpec,
        total_budget: float,
        batch_size: int,
        seed: int,
    ) -> list[Allocation]:
        if len(archive.records) < self.config.min_observations:
            return sample_uniform(spec, total_budget, seed, batch_size, min_samples=1)
        if self._ceilings is None:
            self._ceilings = _sample_ceilings(spec, total_budget)

        pool_n = max(self.config.candidate_pool, batch_size)
        pool = sample_uniform(
            spec, total_budget, derive_seed(seed, "pool"), pool_n, min_samples=1
        )
        seen = {rec.allocation for rec in archive.records}
        candidates = [a for a in pool if a not in seen]
        if not candidates:
            return sample_uniform(
                spec, total_budget, derive_seed(seed, "fallback"), batch_size, min_samples=1
            )

        x_train = np.stack(
            [encode_allocation(spec, r.allocation, self._ceilings) for r in archive.records]
        )
        y_train = np.asarray([r.result.main_metric for r in archive.records], dtype=float)
        x_cand = np.stack([encode_allocation(spec, a, self._ceilings) for a in candidates])
        mean, std = self._posterior(x_train, y_train, x_cand)

        best = float(y_train.max())
        ei = np.array(
            [expected_improvement(m, s, best) for m, s in zip(mean, std)]
        )
        order = np.argsort(-ei, kind="stable")
        chosen = [candidates[i] for i in order[:batch_size]]
        if len(chosen) < batch_size:
            filler = sample_uniform(
                spec,
                total_budget,
                derive_seed(seed, "fill"),
                batch_size - len(chosen),
                min_samples=1,
            )
            chosen.extend(filler)
        return chosen

    def _posterior(
        self, x_train: np.ndarray, y_train: np.ndarray, x_cand: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        cfg = self.config
        k_tt = self._kernel(x_train, x_train) + cfg.jitter * np.eye(len(x_train))
        k_ct = self._kernel(x_cand, x_train)
        y_mean = y_train.mean()
        centered = y_train - y_mean
        try:
            chol = np.linalg.cholesky(k_tt)
        except np.linalg.LinAlgError:
            chol = np.linalg.cholesky(k_tt + 1e-8 * np.eye(len(x_train)))
        alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, centered))
        mean = y_mean + k_ct @ alpha
        v = np.linalg.solve(chol, k_ct.T)
        var = 1.0 - np.sum(v * v, axis=0)
        std = np.sqrt(np.clip(var, 0.0, None))
        return mean, std

    def _kernel(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        d2 = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
        return np.exp(-0.5 * d2 / self.config.length_scale**2)


def surrogate_propose(
    archive: Archive,
    spec: PipelineSpec,
    total_budget: float,
    batch_size: int,
    seed: int,
    config: SurrogateConfig | None = None,
) -> list[Allocation]:
    """One-shot functional form of the surrogate proposal step."""
    return SurrogateStrategy(config).propose(archive, spec, total_budget, batch_size, seed)
