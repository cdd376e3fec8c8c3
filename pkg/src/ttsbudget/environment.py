"""Evaluation backends: synthetic multi-stage surfaces, replay tables, commands.

The synthetic environment evaluates an allocation by chaining per-stage
quality curves.  Each (stage, model) curve is a saturating exponential in the
sample count with an optional linear decay past a peak, and its ceiling,
saturation scale and peak location are modulated by the quality achieved
upstream.  The three behaviours this family encodes, independently knobbed:

* stages differ in which model size wins under a budget cap (``ceiling``
  gaps vs. cheap samples),
* more samples help only up to a stage-specific peak (``decay_rate`` > 0),
* weak upstream output delays and lowers everything downstream
  (``coupling`` > 0 shifts the peak right, ``upstream_exp`` > 0 lowers the
  ceiling).

Train mode adds small deterministic pseudo-noise modelling a finite
evaluation set; Test mode is the exact surface.
"""

from __future__ import annotations

import math
import random
import shlex
import subprocess
from dataclasses import dataclass, field, replace
from enum import Enum
from hashlib import blake2b
from pathlib import Path
from .costmodel import ModelSpec, TaskShape
from .searchspace import (
    Allocation,
    PipelineSpec,
    SearchSpaceError,
    SubtaskSpec,
    allocation_budget,
    count_valid,
    default_budget,
    enumerate_valid,
    min_subtask_budget,
    validate_allocation,
)
from .costmodel import max_samples


class EvaluationError(RuntimeError):
    """An evaluation backend failed or was queried outside its domain."""


class Mode(Enum):
    TRAIN = "train"
    TEST = "test"


@dataclass(frozen=True)
class CurveShape:
    """Quality-curve knobs for one (subtask, model) pair."""

    ceiling: float          # asymptotic quality at ideal upstream, in (0, 1]
    sat_scale: float        # samples to ~63% of ceiling, > 0
    peak_samples: float     # where decay starts, >= 1
    decay_rate: float       # post-peak linear decay per peak-width, in [0, 1)
    coupling: float = 0.0   # upstream-deficit stretch of scale and peak, >= 0
    upstream_exp: float = 0.0  # ceiling exponent on upstream quality, >= 0

    def __post_init__(self) -> None:
        if not 0 < self.ceiling <= 1:
            raise ValueError("ceiling must be in (0, 1]")
        if self.sat_scale <= 0:
            raise ValueError("sat_scale must be > 0")
        if self.peak_samples < 1:
            raise ValueError("peak_samples must be >= 1")
        if not 0 <= self.decay_rate < 1:
            raise ValueError("decay_rate must be in [0, 1)")
        if self.coupling < 0 or self.upstream_exp < 0:
            raise ValueError("coupling and upstream_exp must be >= 0")


@dataclass(frozen=True)
class CurveParams:
    """Curve shapes for every (subtask name, model name) of a pipeline."""

    shapes: dict[tuple[str, str], CurveShape]

    def shape_for(self, subtask: str, model: str) -> CurveShape:
        try:
            return self.shapes[(subtask, model)]
        except KeyError:
            raise EvaluationError(f"no curve for ({subtask!r}, {model!r})") from None


@dataclass(frozen=True)
class EvalResult:
    """Per-stage qualities plus the pipeline's main metric for one trial."""

    per_subtask_quality: tuple[float, ...]
    main_metric: float
    budget_spent: float


def stage_quality(curve: CurveShape, samples: int, upstream_q: float) -> float:
    """Noise-free quality of one stage given its sample count and upstream quality."""
    if samples <= 0:
        return 0.0
    deficit = 1.0 - upstream_q
    ceiling = curve.ceiling * (upstream_q ** curve.upstream_exp if curve.upstream_exp else 1.0)
    tau = curve.sat_scale * (1.0 + curve.coupling * deficit)
    peak = curve.peak_samples * (1.0 + curve.coupling * deficit)
    raw = ceiling * (1.0 - math.exp(-samples / tau))
    if curve.decay_rate and samples > peak:
        raw *= max(0.0, 1.0 - curve.decay_rate * (samples - peak) / peak)
    return min(max(raw, 0.0), 1.0)


@dataclass(frozen=True)
class SyntheticEnv:
    """A seeded synthetic performance surface over a pipeline's allocations."""

    spec: PipelineSpec
    params: CurveParams
    seed: int = 0
    mode: Mode = Mode.TRAIN
    n_train: int = 50
    sigma: float = 0.05
    aggregate: str = "last"  # or "product"

    def __post_init__(self) -> None:
        if self.n_train < 1:
            raise ValueError("n_train must be >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.aggregate not in ("last", "product"):
            raise ValueError("aggregate must be 'last' or 'product'")

    def with_mode(self, mode: Mode) -> "SyntheticEnv":
        return replace(self, mode=mode)

    def _noise(self, alloc: Allocation, stage_index: int) -> float:
        key = f"{self.seed}|{stage_index}|{alloc}"
        digest = blake2b(key.encode(), digest_size=8).digest()
        rng = random.Random(int.from_bytes(digest, "big"))
        return rng.gauss(0.0, self.sigma / math.sqrt(self.n_train))

    def evaluate(self, alloc: Allocation) -> EvalResult:
        validate_allocation(self.spec, alloc)
        qualities: list[float] = []
        q = 1.0
        for i, ((model_name, samples), task) in enumerate(
            zip(alloc.entries, self.spec.subtasks)
        ):
            curve = self.params.shape_for(task.name, model_name)
            value = stage_quality(curve, samples, q)
            if self.mode is Mode.TRAIN and self.sigma > 0:
                value = min(max(value + self._noise(alloc, i), 0.0), 1.0)
            qualities.append(value)
            q = value
        if self.aggregate == "product":
            main = math.prod(qualities)
        else:
            main = qualities[-1]
        return EvalResult(tuple(qualities), main, allocation_budget(self.spec, alloc))


def grid_truth(
    env: SyntheticEnv,
    total_budget: float,
    min_samples: int | None = None,
    cap: int = 10_000_000,
) -> tuple[Allocation, float]:
    """Exhaustive Test-mode argmax over the valid space (first wins ties)."""
    size = count_valid(env.spec, total_budget, min_samples)
    if size == 0:
        raise SearchSpaceError("no valid allocation under the given budget")
    if size > cap:
        raise SearchSpaceError(f"space of {size} allocations exceeds the cap of {cap}")
    test_env = env.with_mode(Mode.TEST)
    # Inline chain evaluation; this loop dominates grid-search runtime.
    tasks = test_env.spec.subtasks
    curves = [
        {m.name: test_env.params.shape_for(t.name, m.name) for m in t.model_space}
        for t in tasks
    ]
    use_product = test_env.aggregate == "product"
    best_alloc: Allocation | None = None
    best_score = -1.0
    for alloc in enumerate_valid(env.spec, total_budget, min_samples):
        q = 1.0
        prod = 1.0
        for (model_name, samples), stage_curves in zip(alloc.entries, curves):
            q = stage_quality(stage_curves[model_name], samples, q)
            if use_product:
                prod *= q
        score = prod if use_product else q
        if score > best_score:
            best_score = score
            best_alloc = alloc
    assert best_alloc is not None
    return best_alloc, best_score


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

PRESET_NAMES = ("retrieval-qa", "three-stage", "flat")


def _jitter(rng: random.Random, center: float, spread: float) -> float:
    return center + spread * rng.uniform(-1.0, 1.0)


def _retrieval_qa(seed: int) -> SyntheticEnv:
    rng = random.Random(("retrieval-qa", seed).__repr__())
    spec = PipelineSpec(
        subtasks=(
            SubtaskSpec(
                "retrieval",
                TaskShape(2048, 128),
                (
                    ModelSpec("ret-7b", 7e9),
                    ModelSpec("ret-32b", 32e9),
                    ModelSpec("ret-72b", 72e9),
                ),
                min_samples=1,
            ),
            SubtaskSpec(
                "qa",
                TaskShape(256, 64),
                (
                    ModelSpec("qa-3b", 3e9),
                    ModelSpec("qa-8b", 8e9),
                    ModelSpec("qa-70b", 70e9),
                ),
                min_samples=1,
            ),
        ),
        main_metric_name="answer_quality",
        name="retrieval-qa",
    )
    # Stage 1: capacity-bound; the big model's ceiling is far above the rest
    # and every model saturates within a couple of samples.  No decay: the
    # first stage carries no upstream and repeated retrieval fuses cleanly.
    shapes: dict[tuple[str, str], CurveShape] = {}
    ret_tau = _jitter(rng, 0.30, 0.05)
    for name, ceiling, spread in (
        ("ret-7b", 0.45, 0.03),
        ("ret-32b", 0.62, 0.03),
        ("ret-72b", 0.86, 0.02),
    ):
        shapes[("retrieval", name)] = CurveShape(
            ceiling=_jitter(rng, ceiling, spread),
            sat_scale=ret_tau,
            peak_samples=400.0,
            decay_rate=0.0,
        )
    # Stage 2: ceilings are close (the small model slightly ahead, the big
    # one highest but unaffordable), every curve peaks and decays, and weak
    # retrieval stretches the curves (coupling) and lowers them (exponent).
    coupling = _jitter(rng, 0.6, 0.1)
    upstream_exp = _jitter(rng, 0.8, 0.1)
    qa_rows = (
        ("qa-3b", 0.80, 0.015, 9.0, 1.0, 55.0, 5.0, 0.12, 0.02),
        ("qa-8b", 0.74, 0.015, 5.0, 0.5, 24.0, 3.0, 0.12, 0.02),
        ("qa-70b", 0.84, 0.015, 3.0, 0.3, 8.0, 1.0, 0.10, 0.02),
    )
    for name, a, asp, tau, tausp, peak, peaksp, c, csp in qa_rows:
        shapes[("qa", name)] = CurveShape(
            ceiling=_jitter(rng, a, asp),
            sat_scale=_jitter(rng, tau, tausp),
            peak_samples=_jitter(rng, peak, peaksp),
            decay_rate=_jitter(rng, c, csp),
            coupling=coupling,
            upstream_exp=upstream_exp,
        )
    return SyntheticEnv(spec=spec, params=CurveParams(shapes), seed=seed)


def _three_stage(seed: int) -> SyntheticEnv:
    rng = random.Random(("three-stage", seed).__repr__())
    models = lambda: (ModelSpec("gen-3b", 3e9), ModelSpec("gen-70b", 70e9))
    spec = PipelineSpec(
        subtasks=(
            SubtaskSpec("code", TaskShape(1024, 1024), models(), min_samples=1),
            SubtaskSpec("static", TaskShape(1024, 512), models(), min_samples=1),
            SubtaskSpec("dynamic", TaskShape(1024, 256), models(), min_samples=1),
        ),
        main_metric_name="consistency",
        name="three-stage",
    )
    shapes: dict[tuple[str, str], CurveShape] = {}
    # Stage 1: no upstream; gentle saturation, no decay.
    shapes[("code", "gen-3b")] = CurveShape(
        ceiling=_jitter(rng, 0.60, 0.03), sat_scale=_jitter(rng, 4.0, 0.5),
        peak_samples=300.0, decay_rate=0.0,
    )
    shapes[("code", "gen-70b")] = CurveShape(
        ceiling=_jitter(rng, 0.80, 0.03), sat_scale=_jitter(rng, 0.6, 0.1),
        peak_samples=300.0, decay_rate=0.0,
    )
    coupling = _jitter(rng, 0.5, 0.1)
    upstream_exp = _jitter(rng, 0.7, 0.1)
    # Stage 2 wants capacity; stage 3 is extraction-like and cheap samples win.
    rows = (
        ("static", "gen-3b", 0.55, 0.03, 6.0, 1.0, 40.0, 5.0, 0.12, 0.02),
        ("static", "gen-70b", 0.92, 0.02, 0.5, 0.1, 4.0, 1.0, 0.10, 0.02),
        ("dynamic", "gen-3b", 0.78, 0.02, 5.0, 0.5, 35.0, 5.0, 0.12, 0.02),
        ("dynamic", "gen-70b", 0.80, 0.02, 0.5, 0.1, 5.0, 1.0, 0.10, 0.02),
    )
    for task, name, a, asp, tau, tausp, peak, peaksp, c, csp in rows:
        shapes[(task, name)] = CurveShape(
            ceiling=_jitter(rng, a, asp),
            sat_scale=_jitter(rng, tau, tausp),
            peak_samples=_jitter(rng, peak, peaksp),
            decay_rate=_jitter(rng, c, csp),
            coupling=coupling,
            upstream_exp=upstream_exp,
        )
    return SyntheticEnv(spec=spec, params=CurveParams(shapes), seed=seed)


def _flat(seed: int) -> SyntheticEnv:
    # Null surface: every model of every stage shares one coupling-free curve,
    # so no stage can prefer one model over another on quality.
    rng = random.Random(("flat", seed).__repr__())
    spec = PipelineSpec(
        subtasks=(
            SubtaskSpec(
                "first",
                TaskShape(1024, 128),
                (ModelSpec("flat-3b", 3e9), ModelSpec("flat-8b", 8e9), ModelSpec("flat-70b", 70e9)),
                min_samples=1,
            ),
            SubtaskSpec(
                "second",
                TaskShape(256, 64),
                (ModelSpec("flat-3b", 3e9), ModelSpec("flat-8b", 8e9), ModelSpec("flat-70b", 70e9)),
                min_samples=1,
            ),
        ),
        main_metric_name="score",
        name="flat",
    )
    curve = CurveShape(
        ceiling=_jitter(rng, 0.7, 0.05),
        sat_scale=_jitter(rng, 5.0, 0.5),
        peak_samples=500.0,
        decay_rate=0.0,
        coupling=0.0,
        upstream_exp=0.0,
    )
    shapes = {
        (task.name, model.name): curve
        for task in spec.subtasks
        for model in task.model_space
    }
    return SyntheticEnv(spec=spec, params=CurveParams(shapes), seed=seed)


def make_preset(name: str, seed: int = 0) -> SyntheticEnv:
    """Build one of the named synthetic environments, deterministically per seed."""
    builders = {"retrieval-qa": _retrieval_qa, "three-stage": _three_stage, "flat": _flat}
    try:
        builder = builders[name]
    except KeyError:
        raise EvaluationError(
            f"unknown preset {name!r}; expected one of {PRESET_NAMES}"
        ) from None
    return builder(seed)


# ---------------------------------------------------------------------------
# Structural checks on a synthetic surface
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    witness: str


@dataclass(frozen=True)
class InsightReport:
    checks: tuple[CheckResult, ...]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        return [
            f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.witness}" for c in self.checks
        ]


def _isolated_best(
    env: SyntheticEnv, task: SubtaskSpec, model: ModelSpec, cap: float
) -> tuple[float, int] | None:
    """(best quality, argmax samples) for one stage alone under a budget cap."""
    smax = max_samples(model, task.shape, cap, env.spec.base)
    if smax is None or smax < 1:
        return None
    if task.max_samples_cap is not None:
        smax = min(smax, task.max_samples_cap)
    curve = env.params.shape_for(task.name, model.name)
    best_q, best_s = -1.0, 1
    for s in range(1, smax + 1):
        q = stage_quality(curve, s, 1.0)
        if q > best_q:
            best_q, best_s = q, s
    return best_q, best_s


def _stage_cap(env: SyntheticEnv, index: int, total_budget: float) -> float:
    """Budget left for one stage when every other stage runs at its cheapest."""
    others = sum(
        min_subtask_budget(env.spec, t, 1)
        for j, t in enumerate(env.spec.subtasks)
        if j != index
    )
    return total_budget - others


def verify_insights(env: SyntheticEnv, total_budget: float | None = None) -> InsightReport:
    """Check the noiseless surface for the three structural behaviours.

    1. Under an equal per-stage budget split, at least two stages disagree on
       which model (by position in the stage's model space) is best.
    2. Every curve with decay attains its maximum strictly inside the feasible
       sample range.
    3. For downstream stages, lowering upstream quality never moves the
       best sample count down.
    """
    if total_budget is None:
        total_budget = default_budget(env.spec)
    env = env.with_mode(Mode.TEST)
    spec = env.spec
    checks: list[CheckResult] = []

    # Check 1: equal-split model preference.
    equal_cap = total_budget / len(spec.subtasks)
    argmax_index: dict[str, int] = {}
    detail = []
    for task in spec.subtasks:
        best = None
        for idx, model in enumerate(task.model_space):
            got = _isolated_best(env, task, model, equal_cap)
            if got is None:
                continue
            if best is None or got[0] > best[0]:
                best = (got[0], idx, model.name, got[1])
        if best is not None:
            argmax_index[task.name] = best[1]
            detail.append(f"{task.name}->{best[2]}@{best[3]}")
    distinct = len(set(argmax_index.values())) > 1
    checks.append(
        CheckResult(
            "model-preference",
            distinct,
            f"equal cap {equal_cap:.1f}: " + ", ".join(detail),
        )
    )

    # Check 2: interior peak for every decaying curve.
    interior_ok = True
    witnesses = []
    for i, task in enumerate(spec.subtasks):
        cap = _stage_cap(env, i, total_budget)
        for model in task.model_space:
            curve = env.params.shape_for(task.name, model.name)
            if curve.decay_rate <= 0:
                continue
            smax = max_samples(model, task.shape, cap, spec.base)
            if smax is None or smax < 3:
                interior_ok = False
                witnesses.append(f"{task.name}/{model.name}: range too small")
                continue
            qs = [stage_quality(curve, s, 1.0) for s in range(1, smax + 1)]
            arg = max(range(len(qs)), key=qs.__getitem__) + 1
            if arg == 1 or arg == smax:
                interior_ok = False
                witnesses.append(f"{task.name}/{model.name}: argmax at edge {arg}")
            else:
                witnesses.append(f"{task.name}/{model.name}: peak@{arg}<=S<={smax}")
    checks.append(CheckResult("interior-peak", interior_ok, "; ".join(witnesses) or "no decaying curves"))

    # Check 3: peak shift under degraded upstream quality.
    shift_ok = True
    witnesses = []
    for i, task in enumerate(spec.subtasks):
        if i == 0:
            continue
        cap = _stage_cap(env, i, total_budget)
        for model in task.model_space:
            curve = env.params.shape_for(task.name, model.name)
            smax = max_samples(model, task.shape, cap, spec.base)
            if smax is None or smax < 1:
                continue
            def argmax_at(q: float) -> int:
                qs = [stage_quality(curve, s, q) for s in range(1, smax + 1)]
                return max(range(len(qs)), key=qs.__getitem__) + 1
            low, high = argmax_at(0.4), argmax_at(0.9)
            witnesses.append(f"{task.name}/{model.name}: {low}>={high}")
            if low < high:
                shift_ok = False
    checks.append(CheckResult("peak-shift", shift_ok, "; ".join(witnesses) or "no downstream stages"))

    return InsightReport(tuple(checks))


# ---------------------------------------------------------------------------
# Replay and external-command environments
# ---------------------------------------------------------------------------

TABLE_SCHEMA_VERSION = 1


def _allocation_key(alloc: Allocation) -> tuple[tuple[str, int], ...]:
    return alloc.entries


@dataclass
class TableEnv:
    """Replays stored metric values for exactly the allocations it knows."""

    spec: PipelineSpec
    table: dict[tuple[tuple[str, int], ...], EvalResult] = field(default_factory=dict)

    def evaluate(self, alloc: Allocation) -> EvalResult:
        validate_allocation(self.spec, alloc)
        key = _allocation_key(alloc)
        try:
            return self.table[key]
        except KeyError:
            raise EvaluationError(f"no stored result for allocation {alloc}") from None

    def store(self, alloc: Allocation, result: EvalResult) -> None:
        self.table[_allocation_key(alloc)] = result

    def save(self, path: str | Path) -> None:
        import json

        with Path(path).open("w") as fh:
            fh.write(json.dumps({"schema": TABLE_SCHEMA_VERSION}) + "\n")
            for key, result in self.table.items():
                fh.write(
                    json.dumps(
                        {
                            "allocation": [[m, s] for m, s in key],
                            "per_subtask_quality": list(result.per_subtask_quality),
                            "main_metric": result.main_metric,
                            "budget_spent": result.budget_spent,
                        }
                    )
                    + "\n"
                )


def table_env_load(path: str | Path, spec: PipelineSpec) -> TableEnv:
    """Load a line-delimited allocation->metric table for the given pipeline."""
    import json

    env = TableEnv(spec)
    path = Path(path)
    with path.open() as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise EvaluationError(f"{path}: empty table file")
    try:
        header = json.loads(lines[0])
        if header.get("schema") != TABLE_SCHEMA_VERSION:
            raise EvaluationError(
                f"{path}: unsupported schema {header.get('schema')!r}"
            )
    except json.JSONDecodeError as exc:
        raise EvaluationError(f"{path}: line 1: {exc}") from None
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            alloc = Allocation(tuple((m, int(s)) for m, s in rec["allocation"]))
            result = EvalResult(
                tuple(float(q) for q in rec["per_subtask_quality"]),
                float(rec["main_metric"]),
                float(rec.get("budget_spent", 0.0)),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise EvaluationError(f"{path}: line {lineno}: {exc}") from None
        env.table[_allocation_key(alloc)] = result
    return env


@dataclass
class CommandEnv:
    """Runs an external command per trial and parses one numeric result.

    The template names each stage's fields as ``{<subtask>.model}`` and
    ``{<subtask>.samples}``.  The metric is read as the last
    whitespace-delimited token of the last non-empty output line.
    """

    spec: PipelineSpec
    template: str
    timeout: float = 60.0

    def evaluate(self, alloc: Allocation) -> EvalResult:
        validate_allocation(self.spec, alloc)
        command = self.template
        for (model_name, samples), task in zip(alloc.entries, self.spec.subtasks):
            command = command.replace(f"{{{task.name}.model}}", shlex.quote(model_name))
            command = command.replace(f"{{{task.name}.samples}}", str(samples))
        try:
            proc = subprocess.run(
                command,
                shell=True,
                capture_output=True,
                text=True,
                timeout=self.timeout,
            )
        except subprocess.TimeoutExpired as exc:
            raise EvaluationError(f"command timed out after {self.timeout}s") from exc
        if proc.returncode != 0:
            raise EvaluationError(
                f"command exited {proc.returncode}: {proc.stderr.strip()[:200]}"
            )
        lines = [line for line in proc.stdout.splitlines() if line.strip()]
        if not lines:
            raise EvaluationError("command produced no output")
        token = lines[-1].split()[-1]
        try:
            value = float(token)
        except ValueError:
            raise EvaluationError(f"cannot parse metric from output {token!r}") from None
        # Only the end-of-pipeline metric is observable; earlier stages
        # report 0.0 as "not scored".
        qualities = tuple(
            value if i == len(self.spec.subtasks) - 1 else 0.0
            for i in range(len(self.spec.subtasks))
        )
        return EvalResult(qualities, value, allocation_budget(self.spec, alloc))


def command_env(spec: PipelineSpec, template: str, timeout: float = 60.0) -> CommandEnv:
    return CommandEnv(spec, template, timeout)
