"""Append-only record of search trials, results, and guidelines.

One archive corresponds to one search run.  Records are never mutated or
removed; the best-so-far trajectory and top-k queries are derived views.
Persistence is a line-delimited JSON file with a mandatory schema header;
floats survive the round trip bit-for-bit (JSON uses shortest-repr floats).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from .environment import EvalResult
from .searchspace import Allocation

SCHEMA_VERSION = 1


class ArchiveError(ValueError):
    """Structurally invalid archive operation or file."""


@dataclass(frozen=True)
class Directive:
    """One structured steering hint for a single subtask."""

    subtask: str
    preferred_model: str
    sample_lower: int
    sample_upper: int
    rationale: str


@dataclass(frozen=True)
class GuidelineRecord:
    """A textual or structured guideline produced between search stages."""

    id: int
    stage: int
    kind: str  # "text" | "structured"
    text: str | None = None
    directives: tuple[Directive, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("text", "structured"):
            raise ArchiveError(f"unknown guideline kind {self.kind!r}")
        if self.kind == "text" and (self.text is None or self.directives is not None):
            raise ArchiveError("text guideline must carry text and no directives")
        if self.kind == "structured" and (
            self.directives is None or self.text is not None
        ):
            raise ArchiveError("structured guideline must carry directives and no text")


@dataclass(frozen=True)
class TrialRecord:
    """One evaluated allocation with its provenance."""

    id: int
    stage: int
    strategy: str
    allocation: Allocation
    budget: float
    result: EvalResult
    guideline_ref: int | None = None
    timestamp: float = 0.0


@dataclass
class Archive:
    """Ordered trial and guideline history with best-so-far views."""

    records: list[TrialRecord] = field(default_factory=list)
    guidelines: list[GuidelineRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, record: TrialRecord) -> None:
        if self.records and record.id <= self.records[-1].id:
            raise ArchiveError(
                f"trial id {record.id} not above last id {self.records[-1].id}"
            )
        self.records.append(record)

    def add_guideline(self, guideline: GuidelineRecord) -> None:
        if self.guidelines and guideline.id <= self.guidelines[-1].id:
            raise ArchiveError(
                f"guideline id {guideline.id} not above last id {self.guidelines[-1].id}"
            )
        self.guidelines.append(guideline)

    def next_trial_id(self) -> int:
        return self.records[-1].id + 1 if self.records else 0

    def next_guideline_id(self) -> int:
        return self.guidelines[-1].id + 1 if self.guidelines else 0

    def best(self, k: int = 1) -> list[TrialRecord]:
        """Top-k records by score; ties prefer lower budget, then lower id."""
        ranked = sorted(
            self.records, key=lambda r: (-r.result.main_metric, r.budget, r.id)
        )
        return ranked[:k]

    def best_record(self) -> TrialRecord | None:
        top = self.best(1)
        return top[0] if top else None

    def history_window(self, n: int) -> list[TrialRecord]:
        """The most recent n records, oldest first."""
        return self.records[-n:] if n > 0 else []

    def trajectory(self) -> list[tuple[int, float]]:
        """(trial index, best score up to and including it); nondecreasing."""
        out = []
        best = float("-inf")
        for i, rec in enumerate(self.records):
            best = max(best, rec.result.main_metric)
            out.append((i, best))
        return out

    def seen(self, alloc: Allocation) -> bool:
        return any(rec.allocation == alloc for rec in self.records)

    # -- persistence --------------------------------------------------------

    def save(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w") as fh:
            fh.write(
                json.dumps({"schema": SCHEMA_VERSION, "meta": self.meta}, sort_keys=True)
                + "\n"
            )
            for g in self.guidelines:
                fh.write(json.dumps(_guideline_to_json(g), sort_keys=True) + "\n")
            for r in self.records:
                fh.write(json.dumps(_trial_to_json(r), sort_keys=True) + "\n")


def _trial_to_json(rec: TrialRecord) -> dict:
    return {
        "type": "trial",
        "id": rec.id,
        "stage": rec.stage,
        "strategy": rec.strategy,
        "allocation": [[m, s] for m, s in rec.allocation.entries],
        "budget": rec.budget,
        "result": {
            "per_subtask_quality": list(rec.result.per_subtask_quality),
            "main_metric": rec.result.main_metric,
            "budget_spent": rec.result.budget_spent,
        },
        "guideline_ref": rec.guideline_ref,
        "timestamp": rec.timestamp,
    }


def _guideline_to_json(g: GuidelineRecord) -> dict:
    out: dict = {"type": "guideline", "id": g.id, "stage": g.stage, "kind": g.kind}
    if g.kind == "text":
        out["text"] = g.text
    else:
        out["directives"] = [
            {
                "subtask": d.subtask,
                "preferred_model": d.preferred_model,
                "sample_lower": d.sample_lower,
                "sample_upper": d.sample_upper,
                "rationale": d.rationale,
            }
            for d in g.directives
        ]
    return out


def _trial_from_json(obj: dict) -> TrialRecord:
    result = obj["result"]
    return TrialRecord(
        id=int(obj["id"]),
        stage=int(obj["stage"]),
        strategy=str(obj["strategy"]),
        allocation=Allocation(tuple((m, int(s)) for m, s in obj["allocation"])),
        budget=float(obj["budget"]),
        result=EvalResult(
            tuple(float(q) for q in result["per_subtask_quality"]),
            float(result["main_metric"]),
            float(result["budget_spent"]),
        ),
        guideline_ref=obj.get("guideline_ref"),
        timestamp=float(obj.get("timestamp", 0.0)),
    )


def _guideline_from_json(obj: dict) -> GuidelineRecord:
    if obj["kind"] == "text":
        return GuidelineRecord(
            id=int(obj["id"]), stage=int(obj["stage"]), kind="text", text=obj["text"]
        )
    directives = tuple(
        Directive(
            subtask=d["subtask"],
            preferred_model=d["preferred_model"],
            sample_lower=int(d["sample_lower"]),
            sample_upper=int(d["sample_upper"]),
            rationale=d["rationale"],
        )
        for d in obj["directives"]
    )
    return GuidelineRecord(
        id=int(obj["id"]), stage=int(obj["stage"]), kind="structured", directives=directives
    )


def load(path: str | Path) -> Archive:
    """Load an archive; errors name the offending line."""
    path = Path(path)
    with path.open() as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ArchiveError(f"{path}: empty archive file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ArchiveError(f"{path}: line 1: {exc}") from None
    if header.get("schema") != SCHEMA_VERSION:
        raise ArchiveError(f"{path}: unsupported schema version {header.get('schema')!r}")
    archive = Archive(meta=header.get("meta", {}))
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            kind = obj["type"]
            if kind == "trial":
                archive.append(_trial_from_json(obj))
            elif kind == "guideline":
                archive.add_guideline(_guideline_from_json(obj))
            else:
                raise ArchiveError(f"unknown record type {kind!r}")
        except ArchiveError as exc:
            raise ArchiveError(f"{path}: line {lineno}: {exc}") from None
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ArchiveError(f"{path}: line {lineno}: {exc}") from None
    return archive
