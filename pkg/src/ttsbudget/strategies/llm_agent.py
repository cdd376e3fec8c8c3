"""LLM-backed search strategy speaking to a chat-completions HTTP endpoint.

Each stage optionally asks the endpoint to summarize guidelines from the
search history, then asks it for a batch of candidate configurations in
strict JSON.  Responses are validated against the pipeline (model
membership, sample floors, total budget); invalid responses are re-prompted
with the error appended, and after the retry budget the remainder of the
batch falls back to uniform random proposals.

Prompt templates live as plain text files under ``ttsbudget/prompts`` and
are filled by replacing only the known ``{placeholder}`` tokens, so literal
braces in the templates survive.
"""

from __future__ import annotations

import json
import os
import re
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from ..archive import Archive, GuidelineRecord, TrialRecord
from ..searchspace import (
    Allocation,
    PipelineSpec,
    SearchSpaceError,
    allocation_budget,
    sample_uniform,
    validate_allocation,
)
from .base import derive_seed

_PROMPT_DIR = Path(__file__).resolve().parent.parent / "prompts"
_PLACEHOLDERS = (
    "task_name",
    "task_desc",
    "subtask_specification",
    "model_space",
    "budget",
    "metrics",
    "main_metric",
    "history",
    "experience",
    "batch_size",
)

SYSTEM_PROMPT = "You are an expert in parameter optimization."

# Transport signature: (endpoint, payload, token, timeout) -> generated text.
Transport = Callable[[str, dict, "str | None", float], str]


class LlmTransportError(RuntimeError):
    """The endpoint could not be reached or returned an unusable payload."""


class LlmResponseError(ValueError):
    """The generated text failed parsing or validation."""


@dataclass(frozen=True)
class LlmAgentConfig:
    endpoint: str
    model: str
    temperature: float = 0.2
    max_retries: int = 3
    token_env: str = "LLM_API_TOKEN"
    timeout: float = 120.0
    history_window: int = 20
    use_guidelines: bool = True
    templates_dir: Path | None = None
    task_desc: str = "multi-stage pipeline; pick a model and sample count per stage"

    def template(self, name: str) -> str:
        directory = self.templates_dir or _PROMPT_DIR
        return (Path(directory) / f"{name}.txt").read_text()


def render_template(template: str, values: dict[str, object]) -> str:
    """Substitute known placeholders only; literal braces stay untouched."""
    def repl(match: re.Match) -> str:
        key = match.group(1)
        return str(values[key]) if key in values else match.group(0)

    return re.sub(r"\{(" + "|".join(_PLACEHOLDERS) + r")\}", repl, template)


def default_transport(endpoint: str, payload: dict, token: str | None, timeout: float) -> str:
    """POST a chat request and pull the generated text from the response."""
    body = json.dumps(payload).encode()
    headers = {"Content-Type": "application/json"}
    if token:
        headers["Authorization"] = f"Bearer {token}"
    request = urllib.request.Request(endpoint, data=body, headers=headers)
    try:
        with urllib.request.urlopen(request, timeout=timeout) as response:
            raw = response.read().decode()
    except (urllib.error.URLError, OSError) as exc:
        raise LlmTransportError(f"endpoint {endpoint}: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise LlmTransportError(f"endpoint returned non-JSON: {raw[:200]!r}") from exc
    try:
        choice = doc["choices"][0]
        if "message" in choice:
            return choice["message"]["content"]
        return choice["text"]
    except (KeyError, IndexError, TypeError):
        for key in ("text", "content", "output"):
            if isinstance(doc.get(key), str):
                return doc[key]
    raise LlmTransportError(f"cannot find generated text in response: {raw[:200]!r}")


# ---------------------------------------------------------------------------
# Serialization of the search state into prompt inputs
# ---------------------------------------------------------------------------


def describe_subtasks(spec: PipelineSpec) -> str:
    parts = []
    for task in spec.subtasks:
        parts.append(
            f"{task.name}(prompt={task.shape.prompt_len}, gen={task.shape.gen_len})"
        )
    return "; ".join(parts)


def describe_model_space(spec: PipelineSpec) -> str:
    parts = []
    for task in spec.subtasks:
        models = ", ".join(f"{m.name}({m.params:.3g} params)" for m in task.model_space)
        parts.append(f"{task.name}: [{models}]")
    return "; ".join(parts)


def describe_history(archive: Archive, window: int, spec: PipelineSpec) -> str:
    names = [t.name for t in spec.subtasks]
    lines = []
    for rec in archive.history_window(window):
        alloc = ", ".join(
            f"{name}={m}:{s}" for name, (m, s) in zip(names, rec.allocation.entries)
        )
        lines.append(
            f"trial {rec.id}: {alloc} -> {rec.result.main_metric:.4f} "
            f"(budget {rec.budget:.1f})"
        )
    return "\n".join(lines) if lines else "(empty)"


def _prompt_values(
    spec: PipelineSpec,
    total_budget: float,
    archive: Archive,
    config: LlmAgentConfig,
    batch_size: int,
    experience: str,
) -> dict[str, object]:
    return {
        "task_name": spec.name,
        "task_desc": config.task_desc,
        "subtask_specification": describe_subtasks(spec),
        "model_space": describe_model_space(spec),
        "budget": f"{total_budget:.2f}",
        "metrics": spec.main_metric_name,
        "main_metric": spec.main_metric_name,
        "history": describe_history(archive, config.history_window, spec),
        "experience": experience or "(none yet)",
        "batch_size": batch_size,
    }


# ---------------------------------------------------------------------------
# Response parsing and validation
# ---------------------------------------------------------------------------


def _extract_json(text: str):
    """First parseable JSON value in the text (handles fenced code blocks)."""
    text = text.strip()
    decoder = json.JSONDecoder()
    for start in range(len(text)):
        if text[start] not in "[{":
            continue
        try:
            value, _ = decoder.raw_decode(text[start:])
            return value
        except json.JSONDecodeError:
            continue
    raise LlmResponseError("no JSON value found in the response")


def parse_llm_trials(text: str, spec: PipelineSpec) -> list[Allocation]:
    """Parse candidate configurations: subtask -> {model, samples} mappings."""
    value = _extract_json(text)
    if isinstance(value, dict):
        value = [value]
    if not isinstance(value, list):
        raise LlmResponseError("expected a JSON object or array of objects")
    allocations = []
    names = [t.name for t in spec.subtasks]
    for item in value:
        if not isinstance(item, dict):
            raise LlmResponseError("each candidate must be a JSON object")
        entries = []
        for i, name in enumerate(names):
            got = item.get(name, item.get(f"subtask_{i + 1}"))
            if got is None:
                raise LlmResponseError(f"candidate missing subtask {name!r}")
            if not isinstance(got, dict) or "model" not in got or "samples" not in got:
                raise LlmResponseError(
                    f"subtask {name!r} must map to {{'model': ..., 'samples': ...}}"
                )
            samples = got["samples"]
            if not isinstance(samples, int) or isinstance(samples, bool):
                raise LlmResponseError(f"subtask {name!r}: samples must be an integer")
            entries.append((str(got["model"]), samples))
        allocations.append(Allocation(tuple(entries)))
    return allocations


def _validate_batch(
    spec: PipelineSpec, allocations: Iterable[Allocation], total_budget: float
) -> None:
    for alloc in allocations:
        validate_allocation(spec, alloc, min_samples=1)
        budget = allocation_budget(spec, alloc)
        if budget > total_budget + 1e-9:
            raise LlmResponseError(
                f"allocation {alloc} exceeds the budget by {budget - total_budget:.2f} "
                f"({budget:.2f} > {total_budget:.2f})"
            )


# ---------------------------------------------------------------------------
# Guideline generation and trial proposal
# ---------------------------------------------------------------------------


def llm_guidelines(
    config: LlmAgentConfig,
    archive: Archive,
    stage: int,
    spec: PipelineSpec,
    total_budget: float,
    transport: Transport = default_transport,
) -> GuidelineRecord:
    """Ask the endpoint to summarize steering guidelines from the history."""
    template_name = "initial_guidelines" if stage <= 1 else "followup_guidelines"
    template = config.template(template_name)
    values = _prompt_values(spec, total_budget, archive, config, 0, "")
    prompt = render_template(template, values)
    token = os.environ.get(config.token_env)
    payload = {
        "model": config.model,
        "temperature": config.temperature,
        "messages": [
            {"role": "system", "content": SYSTEM_PROMPT},
            {"role": "user", "content": prompt},
        ],
    }
    text = transport(config.endpoint, payload, token, config.timeout)
    return GuidelineRecord(
        id=archive.next_guideline_id(), stage=stage, kind="text", text=text
    )


def llm_propose(
    config: LlmAgentConfig,
    spec: PipelineSpec,
    total_budget: float,
    batch_size: int,
    archive: Archive,
    experience: str,
    seed: int,
    transport: Transport = default_transport,
) -> list[Allocation]:
    """Ask for a batch of configurations; repair invalid replies, then fall back."""
    template = config.template("trial_generation")
    values = _prompt_values(spec, total_budget, archive, config, batch_size, experience)
    prompt = render_template(template, values)
    token = os.environ.get(config.token_env)
    messages = [
        {"role": "system", "content": SYSTEM_PROMPT},
        {"role": "user", "content": prompt},
    ]
    accepted: list[Allocation] = []
    for _ in range(config.max_retries + 1):
        payload = {
            "model": config.model,
            "temperature": config.temperature,
            "messages": list(messages),
        }
        try:
            text = transport(config.endpoint, payload, token, config.timeout)
        except LlmTransportError:
            break
        try:
            batch = parse_llm_trials(text, spec)
            _validate_batch(spec, batch, total_budget)
        except (LlmResponseError, SearchSpaceError) as exc:
            messages.append({"role": "assistant", "content": text})
            messages.append(
                {
                    "role": "user",
                    "content": (
                        f"Previous response invalid: {exc} "
                        f"Return only {batch_size} candidates in strict JSON format."
                    ),
                }
            )
            continue
        for alloc in batch:
            if alloc not in accepted:
                accepted.append(alloc)
        if len(accepted) >= batch_size:
            return accepted[:batch_size]
        messages.append({"role": "assistant", "content": text})
        messages.append(
            {
                "role": "user",
                "content": (
                    f"Received {len(accepted)} valid candidates; provide "
                    f"{batch_size - len(accepted)} more in strict JSON format."
                ),
            }
        )
    if len(accepted) < batch_size:
        filler = sample_uniform(
            spec,
            total_budget,
            derive_seed(seed, "llm-fallback"),
            batch_size - len(accepted),
            min_samples=1,
        )
        accepted.extend(filler)
    return accepted[:batch_size]


@dataclass
class LlmAgentStrategy:
    """Strategy wrapper: guideline generation plus JSON trial proposals."""

    config: LlmAgentConfig
    transport: Transport = default_transport
    name: str = field(default="llm", init=False)

    def propose(
        self,
        archive: Archive,
        spec: PipelineSpec,
        total_budget: float,
        batch_size: int,
        seed: int,
    ) -> list[Allocation]:
        stage = archive.records[-1].stage + 1 if archive.records else 0
        experience = ""
        if self.config.use_guidelines and archive.records:
            guideline = llm_guidelines(
                self.config, archive, stage, spec, total_budget, self.transport
            )
            archive.add_guideline(guideline)
            experience = guideline.text or ""
        elif archive.guidelines:
            experience = archive.guidelines[-1].text or ""
        return llm_propose(
            self.config,
            spec,
            total_budget,
            batch_size,
            archive,
            experience,
            seed,
            self.transport,
        )

    def on_feedback(self, records: Iterable[TrialRecord]) -> None:
        pass
