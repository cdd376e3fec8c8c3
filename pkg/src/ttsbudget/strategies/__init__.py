"""Search strategies and the shared propose-evaluate-archive loop."""

from .base import RandomStrategy, Strategy, StrategyError, derive_seed, random_propose
from .insight import InsightConfig, InsightStrategy, insight_init, insight_preference
from .llm_agent import LlmAgentConfig, LlmAgentStrategy, llm_guidelines, llm_propose
from .loop import final_report, run_search
from .surrogate import (
    SurrogateConfig,
    SurrogateStrategy,
    expected_improvement,
    surrogate_propose,
)

STRATEGY_BUILDERS = {
    "random": RandomStrategy,
    "insight": InsightStrategy,
    "surrogate": SurrogateStrategy,
}

__all__ = [
    "InsightConfig",
    "InsightStrategy",
    "LlmAgentConfig",
    "LlmAgentStrategy",
    "RandomStrategy",
    "STRATEGY_BUILDERS",
    "Strategy",
    "StrategyError",
    "SurrogateConfig",
    "SurrogateStrategy",
    "derive_seed",
    "expected_improvement",
    "final_report",
    "insight_init",
    "insight_preference",
    "llm_guidelines",
    "llm_propose",
    "random_propose",
    "run_search",
    "surrogate_propose",
]
