"""Evolutionary search over heuristic programs for one context."""

from .config import load_config
from .driver import ConfigError, SearchConfig, SearchDBExists, SearchResult, run_search
from .evaluators import CacheEvaluator, CcEvaluator, EvaluatorError, EvaluatorSpec, build_evaluator
from .generators import (
    ChatClient,
    GeneratorUnavailable,
    LLMConfig,
    LLMGenerator,
    MockGenerator,
    PromptBundle,
    Proposal,
    llm_generate,
    mock_generate,
)
from .records import CandidateRecord, db_append, db_load

__all__ = [
    "CacheEvaluator",
    "CandidateRecord",
    "CcEvaluator",
    "ChatClient",
    "ConfigError",
    "EvaluatorError",
    "EvaluatorSpec",
    "GeneratorUnavailable",
    "LLMConfig",
    "LLMGenerator",
    "MockGenerator",
    "PromptBundle",
    "Proposal",
    "SearchConfig",
    "SearchDBExists",
    "SearchResult",
    "build_evaluator",
    "db_append",
    "db_load",
    "llm_generate",
    "load_config",
    "mock_generate",
    "run_search",
]
