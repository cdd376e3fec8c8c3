"""Deterministic insight-guided search agent.

The agent runs in two phases.  The initialization phase sweeps each
subtask's candidate models under a fair per-subtask cap (the one-pass cost
of the subtask's largest affordable model) while pinning every other
subtask to its largest affordable model at one sample.  Feedback from that
sweep fixes a preferred model per subtask: the smallest one whose best
score is within a relative margin of the best overall.

The refinement phase then searches the sample axis of each preferred model
with a shrinking bracket (double the upper bound while the best sits on it,
otherwise probe the bracket thirds and tighten around the incumbent), and
rebalances budget between subtasks by moving a fixed quantum from the
lowest to the highest marginal-gain subtask.  A uniform-random trial is
mixed in after two stages without improvement.  Every decision is a pure
function of the archive and the stage seed, so runs are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from ..archive import Archive, Directive, GuidelineRecord, TrialRecord
from ..costmodel import max_samples
from ..searchspace import (
    Allocation,
    PipelineSpec,
    SubtaskSpec,
    allocation_budget,
    min_subtask_budget,
    sample_uniform,
    subtask_budget,
)
from .base import StrategyError, derive_seed


@dataclass(frozen=True)
class InsightConfig:
    epsilon_pref: float = 0.05      # relative margin for "similar performance"
    rebalance_fraction: float = 0.05  # budget quantum moved between subtasks
    stagnation_patience: int = 2    # stages without improvement before exploring

    def __post_init__(self) -> None:
        if not 0 <= self.epsilon_pref < 1:
            raise ValueError("epsilon_pref must be in [0, 1)")
        if not 0 < self.rebalance_fraction < 1:
            raise ValueError("rebalance_fraction must be in (0, 1)")
        if self.stagnation_patience < 1:
            raise ValueError("stagnation_patience must be >= 1")


def _floor(task: SubtaskSpec) -> int:
    return max(1, task.min_samples)


def _one_pass_cost(spec: PipelineSpec, task: SubtaskSpec, model_name: str) -> float:
    """Cost of the cheapest usable run: the sample floor (usually one pass)."""
    return subtask_budget(spec, task, task.model(model_name), _floor(task))


def _anchors(spec: PipelineSpec, total_budget: float) -> list[str]:
    """Largest affordable model per subtask, downsizing until the rest fits."""
    mins = [min_subtask_budget(spec, t, 1) for t in spec.subtasks]
    if sum(mins) > total_budget:
        raise StrategyError(
            f"budget {total_budget:.3f} cannot cover one pass of the smallest "
            f"models ({sum(mins):.3f})"
        )
    anchors = []
    for i, task in enumerate(spec.subtasks):
        cap = total_budget - (sum(mins) - mins[i])
        chosen = None
        for model in reversed(task.model_space):
            if _one_pass_cost(spec, task, model.name) <= cap:
                chosen = model.name
                break
        assert chosen is not None  # smallest model fits by the sum check above
        anchors.append(chosen)
    return anchors


def insight_init(spec: PipelineSpec, total_budget: float) -> list[Allocation]:
    """Initial trial set: per-subtask model sweeps against one-pass anchors.

    With a single subtask there is no fair-comparison cap to respect, so the
    sweep uses the whole budget instead of the anchor's one-pass cost.
    """
    anchors = _anchors(spec, total_budget)
    anchor_entries = tuple(
        (name, _floor(task)) for name, task in zip(anchors, spec.subtasks)
    )
    anchor_cost = [
        _one_pass_cost(spec, task, name) for task, name in zip(spec.subtasks, anchors)
    ]
    single_stage = len(spec.subtasks) == 1
    trials: list[Allocation] = [] if single_stage else [Allocation(anchor_entries)]
    for i, task in enumerate(spec.subtasks):
        fair_cap = total_budget if single_stage else anchor_cost[i]
        residual = total_budget - (sum(anchor_cost) - anchor_cost[i])
        cap = min(fair_cap, residual)
        for model in reversed(task.model_space):
            if _one_pass_cost(spec, task, model.name) > fair_cap:
                continue
            smax = _max_feasible(spec, task, model.name, cap)
            if smax is None or smax < _floor(task):
                continue
            entries = list(anchor_entries)
            entries[i] = (model.name, smax)
            alloc = Allocation(tuple(entries))
            if alloc not in trials:
                trials.append(alloc)
    return trials


def _max_feasible(
    spec: PipelineSpec, task: SubtaskSpec, model_name: str, cap: float
) -> int | None:
    if cap < 0:
        return None
    model = task.model(model_name)
    if spec.metric.value == "api-price":
        # Linear scan is fine: price curves are linear and caps are small.
        s = 0
        while subtask_budget(spec, task, model, s + 1) <= cap:
            s += 1
            if task.max_samples_cap is not None and s >= task.max_samples_cap:
                break
        return s if subtask_budget(spec, task, model, s) <= cap else None
    smax = max_samples(model, task.shape, cap, spec.base)
    if smax is not None and task.max_samples_cap is not None:
        smax = min(smax, task.max_samples_cap)
    return smax


def insight_preference(
    scores: Mapping[str, float], model_order: Sequence[str], epsilon_pref: float = 0.05
) -> str:
    """Smallest model whose best score is within the margin of the best overall."""
    if not scores:
        raise ValueError("need at least one scored model")
    best = max(scores.values())
    threshold = (1.0 - epsilon_pref) * best
    for name in model_order:
        if name in scores and scores[name] >= threshold:
            return name
    raise ValueError("no model reached the preference threshold")  # unreachable


def _build_probe(
    spec: PipelineSpec,
    incumbent: Allocation,
    index: int,
    model_name: str,
    samples: int,
    total_budget: float,
) -> Allocation | None:
    """Incumbent with one stage re-pinned; other stages shrink to make room.

    If the probe does not fit beside the incumbent's other entries, the other
    stages give up samples proportionally to their current budget share (never
    below one), mirroring how budget is shifted toward a prioritized stage.
    """
    entries = list(incumbent.entries)
    entries[index] = (model_name, samples)
    probe = Allocation(tuple(entries))
    if allocation_budget(spec, probe) <= total_budget:
        return probe
    fixed = subtask_budget(
        spec, spec.subtasks[index], spec.subtasks[index].model(model_name), samples
    )
    remaining = total_budget - fixed
    shares = []
    for j, (task, (m, s)) in enumerate(zip(spec.subtasks, incumbent.entries)):
        if j != index:
            shares.append((j, subtask_budget(spec, task, task.model(m), s)))
    share_sum = sum(b for _, b in shares)
    if share_sum <= 0 or remaining <= 0:
        return None
    scale = remaining / share_sum
    for j, share in shares:
        task = spec.subtasks[j]
        model = task.model(incumbent.entries[j][0])
        squeezed = _max_feasible(spec, task, model.name, share * scale)
        if squeezed is None or squeezed < _floor(task):
            return None
        entries[j] = (model.name, min(squeezed, incumbent.entries[j][1]))
    probe = Allocation(tuple(entries))
    if allocation_budget(spec, probe) > total_budget:
        return None
    return probe


class InsightStrategy:
    """Two-phase deterministic agent: model sweep, then bracket-and-rebalance."""

    name = "insight"

    def __init__(self, config: InsightConfig | None = None) -> None:
        self.config = config or InsightConfig()
        self._pending_init: list[Allocation] | None = None
        self._anchors: list[str] | None = None
        self._phase = "init"
        self._preferred: dict[str, str] = {}
        self._brackets: dict[str, tuple[int, int]] = {}
        self._best_seen = float("-inf")
        self._stagnation = 0

    # -- phase handling ------------------------------------------------------

    def propose(
        self,
        archive: Archive,
        spec: PipelineSpec,
        total_budget: float,
        batch_size: int,
        seed: int,
    ) -> list[Allocation]:
        if self._phase == "init":
            if self._pending_init is None:
                self._anchors = _anchors(spec, total_budget)
                self._pending_init = insight_init(spec, total_budget)
            if self._pending_init:
                out = self._pending_init[:batch_size]
                self._pending_init = self._pending_init[batch_size:]
                if len(out) < batch_size:
                    out = out + sample_uniform(
                        spec,
                        total_budget,
                        derive_seed(seed, "init-fill"),
                        batch_size - len(out),
                        min_samples=1,
                    )
                return out
            self._finalize_preferences(archive, spec)
        return self._refine(archive, spec, total_budget, batch_size, seed)

    def on_feedback(self, records: Iterable[TrialRecord]) -> None:
        records = list(records)
        if not records:
            return
        stage_best = max(r.result.main_metric for r in records)
        if stage_best > self._best_seen + 1e-12:
            self._best_seen = stage_best
            self._stagnation = 0
        else:
            self._stagnation += 1

    # -- initialization feedback ----------------------------------------------

    def _finalize_preferences(self, archive: Archive, spec: PipelineSpec) -> None:
        assert self._anchors is not None
        anchor_entries = tuple(
            (name, _floor(task)) for name, task in zip(self._anchors, spec.subtasks)
        )
        scores: list[dict[str, float]] = [dict() for _ in spec.subtasks]
        sweep_samples: list[dict[str, int]] = [dict() for _ in spec.subtasks]
        for rec in archive.records:
            diffs = [
                j
                for j, entry in enumerate(rec.allocation.entries)
                if entry != anchor_entries[j]
            ]
            if not diffs:
                # The all-anchor trial scores the anchor model of every subtask.
                for j, (model_name, s) in enumerate(rec.allocation.entries):
                    prev = scores[j].get(model_name, float("-inf"))
                    scores[j][model_name] = max(prev, rec.result.main_metric)
                    sweep_samples[j].setdefault(model_name, s)
            elif len(diffs) == 1:
                j = diffs[0]
                model_name, s = rec.allocation.entries[j]
                prev = scores[j].get(model_name, float("-inf"))
                scores[j][model_name] = max(prev, rec.result.main_metric)
                sweep_samples[j].setdefault(model_name, s)
        for j, task in enumerate(spec.subtasks):
            order = [m.name for m in task.model_space]
            if scores[j]:
                preferred = insight_preference(scores[j], order, self.config.epsilon_pref)
            else:
                preferred = order[0]  # nothing scored: keep the cheapest option
            self._preferred[task.name] = preferred
            floor = _floor(task)
            upper = max(floor, sweep_samples[j].get(preferred, floor))
            self._brackets[task.name] = (floor, upper)
        self._phase = "refine"

    # -- refinement ------------------------------------------------------------

    def _refine(
        self,
        archive: Archive,
        spec: PipelineSpec,
        total_budget: float,
        batch_size: int,
        seed: int,
    ) -> list[Allocation]:
        incumbent_rec = archive.best_record()
        if incumbent_rec is None:
            return sample_uniform(spec, total_budget, seed, batch_size, min_samples=1)
        incumbent = incumbent_rec.allocation
        stage = archive.records[-1].stage + 1 if archive.records else 0

        first_probes: list[Allocation] = []
        second_probes: list[Allocation] = []
        directives: list[Directive] = []
        for i, task in enumerate(spec.subtasks):
            pref = self._preferred[task.name]
            lo, hi = self._brackets[task.name]
            # Ceiling with every other stage squeezed to its sample floor
            # on its incumbent model; probes may shift budget between stages.
            floor_others = sum(
                subtask_budget(spec, t, t.model(m), _floor(t))
                for j, (t, (m, _)) in enumerate(zip(spec.subtasks, incumbent.entries))
                if j != i
            )
            smax = _max_feasible(spec, task, pref, total_budget - floor_others)
            if smax is None or smax < _floor(task):
                directives.append(
                    Directive(task.name, pref, lo, hi, "preferred model unaffordable here")
                )
                continue
            s_best = self._axis_best(archive, spec, i, pref)
            probe_ss: list[int]
            if s_best >= hi and hi < smax:
                new_hi = min(max(hi * 2, 2), smax)
                probe_ss = [new_hi]
                rationale = "best at upper edge; doubling the sample bound"
                lo, hi = min(lo, new_hi), max(hi, new_hi)
            elif s_best >= hi:
                # The edge already sits on the feasibility ceiling; the only
                # informative direction is downward.
                third = max(1, (hi - lo) // 3)
                probe_ss = [lo + third, hi - third]
                rationale = "upper bound at the budget ceiling; probing below it"
            else:
                third = max(1, (hi - lo) // 3)
                probe_ss = [lo + third, hi - third]
                lo, hi = max(lo, s_best - third), min(hi, s_best + third)
                if lo > hi:
                    lo, hi = hi, lo
                rationale = "interior best; probing thirds and tightening"
            lo = max(_floor(task), min(lo, smax))
            hi = max(lo, min(hi, smax))
            self._brackets[task.name] = (lo, hi)
            directives.append(Directive(task.name, pref, lo, hi, rationale))
            clamped = dict.fromkeys(min(max(s, _floor(task)), smax) for s in probe_ss)
            for idx, s in enumerate(clamped):
                alloc = _build_probe(spec, incumbent, i, pref, s, total_budget)
                if alloc is not None:
                    (first_probes if idx == 0 else second_probes).append(alloc)

        candidates = first_probes
        rebalance = self._rebalance(archive, spec, total_budget)
        if rebalance is not None:
            candidates.append(rebalance)
        candidates.extend(second_probes)
        if self._stagnation >= self.config.stagnation_patience:
            candidates.extend(
                sample_uniform(
                    spec, total_budget, derive_seed(seed, "explore"), 1, min_samples=1
                )
            )

        # Deduplicate against history and within the batch, then fit the batch.
        unique: list[Allocation] = []
        for alloc in candidates:
            if alloc not in unique and not archive.seen(alloc):
                unique.append(alloc)
        if len(unique) < batch_size:
            filler = sample_uniform(
                spec,
                total_budget,
                derive_seed(seed, "fill"),
                batch_size - len(unique),
                min_samples=1,
            )
            for alloc in filler:
                if alloc not in unique:
                    unique.append(alloc)
        out = unique[:batch_size]

        archive.add_guideline(
            GuidelineRecord(
                id=archive.next_guideline_id(),
                stage=stage,
                kind="structured",
                directives=tuple(directives),
            )
        )
        return out

    def _axis_best(
        self, archive: Archive, spec: PipelineSpec, index: int, model_name: str
    ) -> int:
        """Sample count of the best archived trial using model_name at index."""
        best_score = float("-inf")
        best_s = self._brackets[spec.subtasks[index].name][1]
        for rec in archive.records:
            m, s = rec.allocation.entries[index]
            if m == model_name and rec.result.main_metric > best_score:
                best_score = rec.result.main_metric
                best_s = s
        return best_s

    def _rebalance(
        self, archive: Archive, spec: PipelineSpec, total_budget: float
    ) -> Allocation | None:
        """Move one budget quantum from the flattest subtask to the steepest."""
        incumbent = archive.best_record()
        if incumbent is None or len(spec.subtasks) < 2:
            return None
        base_samples: list[int] = []
        shares: list[float] = []
        for i, task in enumerate(spec.subtasks):
            pref = self._preferred[task.name]
            model_name, s = incumbent.allocation.entries[i]
            if model_name != pref:
                cost = subtask_budget(spec, task, task.model(model_name), s)
                converted = _max_feasible(spec, task, pref, cost)
                if converted is None or converted < _floor(task):
                    return None
                s = converted
            base_samples.append(s)
            shares.append(subtask_budget(spec, task, task.model(pref), s))

        gains: list[float] = []
        for i, task in enumerate(spec.subtasks):
            pref = self._preferred[task.name]
            points: dict[int, float] = {}
            for rec in archive.records:
                m, s = rec.allocation.entries[i]
                if m == pref:
                    points[s] = max(points.get(s, float("-inf")), rec.result.main_metric)
            if len(points) < 2:
                gains.append(float("inf"))  # unexplored axis: assume unsaturated
                continue
            ordered = sorted(points, key=lambda s: (abs(s - base_samples[i]), s))
            s1, s2 = sorted(ordered[:2])
            model = task.model(pref)
            db = subtask_budget(spec, task, model, s2) - subtask_budget(spec, task, model, s1)
            gains.append((points[s2] - points[s1]) / db if db else 0.0)

        donor = min(range(len(gains)), key=gains.__getitem__)
        receiver = max(range(len(gains)), key=gains.__getitem__)
        if donor == receiver or gains[donor] == gains[receiver]:
            return None
        quantum = self.config.rebalance_fraction * total_budget
        entries: list[tuple[str, int]] = []
        for i, task in enumerate(spec.subtasks):
            pref = self._preferred[task.name]
            target = shares[i]
            if i == donor:
                target -= quantum
            elif i == receiver:
                target += quantum
            s = _max_feasible(spec, task, pref, target)
            if s is None or s < _floor(task):
                return None
            entries.append((pref, s))
        alloc = Allocation(tuple(entries))
        if allocation_budget(spec, alloc) > total_budget:
            return None
        return alloc
