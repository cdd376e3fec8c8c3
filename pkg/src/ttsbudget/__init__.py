"""Compute-budget accounting and allocation search for multi-stage pipelines."""

from .costmodel import (
    BaseConfig,
    CostMetric,
    ModelSpec,
    TaskShape,
    equivalent_samples,
    max_samples,
    normalized_budget,
    price_cost,
)
from .searchspace import (
    Allocation,
    PipelineSpec,
    SubtaskSpec,
    allocation_budget,
    count_valid,
    default_budget,
    enumerate_valid,
    sample_uniform,
)

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "BaseConfig",
    "CostMetric",
    "ModelSpec",
    "PipelineSpec",
    "SubtaskSpec",
    "TaskShape",
    "allocation_budget",
    "count_valid",
    "default_budget",
    "enumerate_valid",
    "equivalent_samples",
    "max_samples",
    "normalized_budget",
    "price_cost",
    "sample_uniform",
]
