"""Agent, judge and meta-controller backends."""

from .base import (
    AgentBackend,
    BackendError,
    Backends,
    BackendTimeout,
    ContributionContext,
    JudgeBackend,
    JudgeVerdict,
    MetaBackend,
    MetaSnapshot,
    Query,
    RoundContext,
    RubricError,
    RubricItem,
    TransportError,
    extract_final_answer,
    rubric_score,
)
from .schema import MetaDecision, SchemaError, parse_decision, parse_decision_text, serialize

__all__ = [
    "AgentBackend", "BackendError", "Backends", "BackendTimeout", "ContributionContext",
    "JudgeBackend", "JudgeVerdict", "MetaBackend", "MetaSnapshot", "Query", "RoundContext",
    "RubricError", "RubricItem", "TransportError", "extract_final_answer", "rubric_score",
    "MetaDecision", "SchemaError", "parse_decision", "parse_decision_text", "serialize",
]
