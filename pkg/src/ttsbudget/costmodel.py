"""Inference-cost accounting and the normalized compute-budget calculus.

The budget unit is one inference pass of a reference "base" model on a
reference task shape (default: 3e9 parameters, 128 prompt tokens, 64
generated tokens).  Any (model, sample-count, task-shape) configuration is
expressed as the equivalent number of such base passes, which makes costs
comparable across heterogeneous pipeline stages.

Two FLOPs accountings are provided: a simplified one that keeps only the
parameter matrix-multiply terms (2M per token), and an exact one that adds
the attention terms (4LDt per token at context length t).  A dollar-price
metric based on per-million-token API rates is available as an alternative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class CostModelError(ValueError):
    """A cost computation was asked for data the model spec does not carry."""


class CostMetric(Enum):
    """Which cost accounting a pipeline uses for its budget."""

    FLOPS_SIMPLIFIED = "flops-simplified"
    FLOPS_EXACT = "flops-exact"
    API_PRICE = "api-price"


@dataclass(frozen=True)
class ModelSpec:
    """A candidate model: nominal size plus optional architecture and prices.

    ``params`` counts non-embedding parameters.  ``layers``/``hidden`` are
    only needed for the exact FLOPs accounting and must be given together.
    Prices are dollars per 10^6 tokens and are only needed for the price
    metric.
    """

    name: str
    params: float
    layers: int | None = None
    hidden: int | None = None
    price_per_mtok_in: float | None = None
    price_per_mtok_out: float | None = None

    def __post_init__(self) -> None:
        if self.params <= 0:
            raise ValueError(f"model {self.name!r}: params must be > 0")
        if (self.layers is None) != (self.hidden is None):
            raise ValueError(
                f"model {self.name!r}: layers and hidden must be given together"
            )
        if self.layers is not None and (self.layers <= 0 or self.hidden <= 0):
            raise ValueError(f"model {self.name!r}: layers/hidden must be > 0")
        for label, price in (
            ("price_per_mtok_in", self.price_per_mtok_in),
            ("price_per_mtok_out", self.price_per_mtok_out),
        ):
            if price is not None and price < 0:
                raise ValueError(f"model {self.name!r}: {label} must be >= 0")

    @property
    def has_architecture(self) -> bool:
        return self.layers is not None

    @property
    def has_prices(self) -> bool:
        return self.price_per_mtok_in is not None and self.price_per_mtok_out is not None


@dataclass(frozen=True)
class TaskShape:
    """Average prompt and generation token lengths of one pipeline stage."""

    prompt_len: int
    gen_len: int

    def __post_init__(self) -> None:
        if self.prompt_len < 1 or self.gen_len < 1:
            raise ValueError("prompt_len and gen_len must be >= 1")


@dataclass(frozen=True)
class BaseConfig:
    """The reference configuration that defines one budget unit."""

    base_params: float = 3e9
    base_prompt: int = 128
    base_gen: int = 64

    def __post_init__(self) -> None:
        if self.base_params <= 0 or self.base_prompt <= 0 or self.base_gen <= 0:
            raise ValueError("base configuration fields must be > 0")


DEFAULT_BASE = BaseConfig()


def _require_architecture(model: ModelSpec) -> None:
    if not model.has_architecture:
        raise CostModelError(
            f"model {model.name!r} has no layers/hidden; exact FLOPs unavailable"
        )


def flops_per_token(model: ModelSpec, t: int) -> float:
    """Exact FLOPs to process one token with t preceding tokens in context."""
    _require_architecture(model)
    if t < 0:
        raise ValueError("preceding-token count must be >= 0")
    return 2.0 * model.params + 4.0 * model.layers * model.hidden * t


def flops_prompt(model: ModelSpec, shape: TaskShape) -> float:
    """Exact FLOPs to encode the prompt once."""
    _require_architecture(model)
    n = shape.prompt_len
    return 2.0 * model.params * n + 2.0 * model.layers * model.hidden * n * (n + 1)


def flops_decode(model: ModelSpec, shape: TaskShape) -> float:
    """Exact FLOPs to generate one sample of gen_len tokens after the prompt."""
    _require_architecture(model)
    np_, nd = shape.prompt_len, shape.gen_len
    return 2.0 * model.params * nd + 2.0 * model.layers * model.hidden * nd * (
        2 * np_ + nd + 1
    )


def flops_total(model: ModelSpec, samples: int, shape: TaskShape) -> float:
    """Exact FLOPs for one prompt encoding plus `samples` batched decodes."""
    if samples < 0:
        raise ValueError("samples must be >= 0")
    return flops_prompt(model, shape) + samples * flops_decode(model, shape)


def attention_share(model: ModelSpec, samples: int, shape: TaskShape) -> float:
    """Fraction of the exact total FLOPs contributed by attention terms."""
    total = flops_total(model, samples, shape)
    param_only = 2.0 * model.params * (shape.prompt_len + samples * shape.gen_len)
    return (total - param_only) / total


def _ratios(
    params: float, shape: TaskShape, base: BaseConfig
) -> tuple[float, float, float, float]:
    alpha = params / base.base_params
    beta1 = shape.prompt_len / shape.gen_len
    beta2 = shape.prompt_len / base.base_prompt
    beta3 = base.base_prompt / base.base_gen
    return alpha, beta1, beta2, beta3


def normalized_budget(
    model: ModelSpec,
    samples: int,
    shape: TaskShape,
    base: BaseConfig = DEFAULT_BASE,
) -> float:
    """Budget of `samples` decodes (plus one prompt pass) in base-pass units.

    Computed in the factored arrangement
    ``beta3 * ((alpha*beta2/beta1) * (beta1 + S) - 1)``, which is the exact
    float recipe the reference enumeration uses, so feasibility boundaries
    agree bit-for-bit with it.  Algebraically identical to the affine form
    (see :func:`normalized_budget_affine`).
    """
    if samples < 0:
        raise ValueError("samples must be >= 0")
    alpha, beta1, beta2, beta3 = _ratios(model.params, shape, base)
    return beta3 * ((alpha * beta2 / beta1) * (beta1 + samples) - 1.0)


def budget_line(
    model: ModelSpec, shape: TaskShape, base: BaseConfig = DEFAULT_BASE
) -> tuple[float, float]:
    """(per-sample increment, sample-free cost) of the budget as a line in S."""
    alpha, beta1, beta2, _ = _ratios(model.params, shape, base)
    slope = 2.0 * alpha * beta2 / beta1
    intercept = 2.0 * (alpha * beta2 - 1.0)
    return slope, intercept


def normalized_budget_affine(
    model: ModelSpec,
    samples: int,
    shape: TaskShape,
    base: BaseConfig = DEFAULT_BASE,
) -> float:
    """Budget via the affine arrangement 2*a*b2*S/b1 + 2*(a*b2 - 1)."""
    if samples < 0:
        raise ValueError("samples must be >= 0")
    slope, intercept = budget_line(model, shape, base)
    return slope * samples + intercept


def display_budget(budget: float) -> int:
    """Round a budget to the nearest integer (half away from zero) for display."""
    return int(math.floor(budget + 0.5)) if budget >= 0 else -int(math.floor(-budget + 0.5))


def max_samples(
    model: ModelSpec,
    shape: TaskShape,
    budget_cap: float,
    base: BaseConfig = DEFAULT_BASE,
) -> int | None:
    """Largest S >= 0 whose budget fits under budget_cap, or None if none does.

    Uses the closed-form inversion of the budget line, then nudges by at most
    a couple of steps so the answer is exact under float rounding:
    budget(S) <= cap < budget(S + 1).
    """
    if budget_cap < 0:
        raise ValueError("budget_cap must be >= 0")
    if normalized_budget(model, 0, shape, base) > budget_cap:
        return None
    slope, intercept = budget_line(model, shape, base)
    s = max(0, int((budget_cap - intercept) / slope))
    while normalized_budget(model, s + 1, shape, base) <= budget_cap:
        s += 1
    while s > 0 and normalized_budget(model, s, shape, base) > budget_cap:
        s -= 1
    return s


def price_cost(
    model: ModelSpec,
    samples: int,
    shape: TaskShape,
    prompt_per_sample: bool = False,
) -> float:
    """Dollar cost of one configuration under per-million-token API prices.

    The prompt is charged once (batched sampling shares it); each sample pays
    for its generated tokens.  ``prompt_per_sample=True`` switches to
    per-request billing where every sample re-sends the prompt.
    """
    if samples < 0:
        raise ValueError("samples must be >= 0")
    if not model.has_prices:
        raise CostModelError(f"model {model.name!r} has no prices")
    prompt_charges = samples if prompt_per_sample else 1
    return (
        shape.prompt_len * model.price_per_mtok_in * prompt_charges
        + samples * shape.gen_len * model.price_per_mtok_out
    ) / 1e6


def equivalent_samples(
    source_model: ModelSpec,
    source_samples: int,
    source_shape: TaskShape,
    target_model: ModelSpec,
    target_shape: TaskShape,
    metric: CostMetric = CostMetric.FLOPS_SIMPLIFIED,
) -> float:
    """Sample count the target configuration affords under the source's cost.

    The result is real-valued and may be negative when even the target's
    prompt pass costs more than the whole source configuration; callers are
    expected to floor or clamp as appropriate.
    """
    if source_samples < 0:
        raise ValueError("source_samples must be >= 0")
    if metric is CostMetric.FLOPS_SIMPLIFIED:
        alpha = source_model.params / target_model.params
        beta1 = source_shape.prompt_len / source_shape.gen_len
        beta2 = source_shape.prompt_len / target_shape.prompt_len
        beta3 = target_shape.prompt_len / target_shape.gen_len
        return beta3 * ((alpha * beta2 / beta1) * (beta1 + source_samples) - 1.0)
    if metric is CostMetric.FLOPS_EXACT:
        total = flops_total(source_model, source_samples, source_shape)
        return (total - flops_prompt(target_model, target_shape)) / flops_decode(
            target_model, target_shape
        )
    if metric is CostMetric.API_PRICE:
        if not target_model.has_prices:
            raise CostModelError(f"model {target_model.name!r} has no prices")
        total = price_cost(source_model, source_samples, source_shape)
        prompt = target_shape.prompt_len * target_model.price_per_mtok_in / 1e6
        per_sample = target_shape.gen_len * target_model.price_per_mtok_out / 1e6
        return (total - prompt) / per_sample
    raise ValueError(f"unknown cost metric: {metric}")
