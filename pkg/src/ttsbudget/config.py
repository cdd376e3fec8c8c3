"""Declarative pipeline-spec files (TOML) and run-configuration resolution.

Schema (version 1)::

    schema = 1
    name = "chatdev"
    main_metric = "consistency"
    metric = "flops-simplified"        # optional; or flops-exact / api-price

    [base]                             # optional; defaults shown
    params = 3e9
    prompt = 128
    gen = 64

    [[subtasks]]
    name = "code"
    prompt_len = 1024
    gen_len = 1024
    min_samples = 0                    # optional, default 0
    max_samples_cap = 500              # optional
    models = [
        { name = "llama-3b", params = 3e9 },
        { name = "llama-70b", params = 70e9, layers = 80, hidden = 8192,
          price_in = 0.88, price_out = 0.88 },
    ]

Models must be listed in ascending parameter count.
"""

from __future__ import annotations

import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised only on 3.10
    import tomli as tomllib

from .costmodel import BaseConfig, CostMetric, ModelSpec, TaskShape
from .searchspace import PipelineSpec, SubtaskSpec

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Malformed pipeline configuration file."""


def _model_from_table(table: dict) -> ModelSpec:
    try:
        return ModelSpec(
            name=str(table["name"]),
            params=float(table["params"]),
            layers=table.get("layers"),
            hidden=table.get("hidden"),
            price_per_mtok_in=table.get("price_in"),
            price_per_mtok_out=table.get("price_out"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad model entry {table!r}: {exc}") from None


def load_pipeline_spec(path: str | Path) -> PipelineSpec:
    """Parse a pipeline TOML file into a PipelineSpec."""
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if doc.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"{path}: schema must be {SCHEMA_VERSION}")
    base_table = doc.get("base", {})
    base = BaseConfig(
        base_params=float(base_table.get("params", 3e9)),
        base_prompt=int(base_table.get("prompt", 128)),
        base_gen=int(base_table.get("gen", 64)),
    )
    metric_name = doc.get("metric", CostMetric.FLOPS_SIMPLIFIED.value)
    try:
        metric = CostMetric(metric_name)
    except ValueError:
        raise ConfigError(f"{path}: unknown metric {metric_name!r}") from None
    subtasks = []
    for table in doc.get("subtasks", []):
        try:
            shape = TaskShape(int(table["prompt_len"]), int(table["gen_len"]))
            models = tuple(_model_from_table(m) for m in table["models"])
            subtasks.append(
                SubtaskSpec(
                    name=str(table["name"]),
                    shape=shape,
                    model_space=models,
                    min_samples=int(table.get("min_samples", 0)),
                    max_samples_cap=table.get("max_samples_cap"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: bad subtask entry: {exc}") from None
    if not subtasks:
        raise ConfigError(f"{path}: no subtasks defined")
    try:
        return PipelineSpec(
            subtasks=tuple(subtasks),
            base=base,
            metric=metric,
            main_metric_name=str(doc.get("main_metric", "main")),
            name=str(doc.get("name", path.stem)),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
