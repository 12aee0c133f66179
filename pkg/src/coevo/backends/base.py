"""Backend contracts shared by the mock and HTTP implementations."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

from ..graph import AgentGraph, AgentNode

JUDGE_ANCHORS = (0.0, 0.3, 0.5, 0.7, 1.0)
RUBRIC_OPERATORS = ("correctness", "contradiction")
FINAL_ANSWER = "Final Answer:"


class BackendError(RuntimeError):
    """A backend call failed; the orchestrator records it and carries on."""


class BackendTimeout(BackendError):
    pass


class TransportError(BackendError):
    pass


class RubricError(ValueError):
    pass


def clamp01(x: float) -> float:
    return min(1.0, max(0.0, float(x)))


@dataclass(frozen=True)
class JudgeVerdict:
    score: float
    reason: str = ""

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"judge score {self.score} outside [0, 1]")

    @classmethod
    def clamped(cls, score: float, reason: str = "") -> JudgeVerdict:
        return cls(clamp01(score), reason)


def snap_to_anchor(score: float) -> float:
    return min(JUDGE_ANCHORS, key=lambda a: (abs(a - score), a))


@dataclass(frozen=True)
class RubricItem:
    operator: str
    criterion: str

    def __post_init__(self):
        if self.operator not in RUBRIC_OPERATORS:
            raise RubricError(f"rubric operator must be one of {RUBRIC_OPERATORS}, got {self.operator!r}")

    def to_dict(self) -> dict:
        return {"operator": self.operator, "criterion": self.criterion}


def rubric_score(rubric: Sequence[RubricItem], results: Sequence[bool]) -> float:
    """Fraction of rubric items passed.

    A correctness item passes on ``true``; a contradiction item passes on
    ``false`` (the answer does not contradict the criterion).
    """
    if not rubric:
        raise RubricError("rubric is empty")
    if len(results) != len(rubric):
        raise RubricError(f"{len(results)} verdicts for {len(rubric)} rubric items")
    if not all(isinstance(r, bool) for r in results):
        raise RubricError("rubric verdicts must be booleans")
    passed = sum((r if item.operator == "correctness" else not r) for item, r in zip(rubric, results))
    return passed / len(rubric)


@dataclass(frozen=True)
class Query:
    id: str
    text: str
    rubric: tuple[RubricItem, ...] = ()
    task_profile: str = ""

    def to_dict(self) -> dict:
        return {"id": self.id, "text": self.text, "rubric": [r.to_dict() for r in self.rubric],
                "task_profile": self.task_profile}

    @classmethod
    def from_dict(cls, d: Mapping) -> Query:
        return cls(
            id=str(d["id"]),
            text=d["text"],
            rubric=tuple(RubricItem(r["operator"], r["criterion"]) for r in d.get("rubric", ())),
            task_profile=d.get("task_profile", ""),
        )


@dataclass(frozen=True)
class RoundContext:
    query: Query
    round_idx: int
    graph: AgentGraph


@dataclass(frozen=True)
class ContributionContext:
    query: Query
    round_idx: int
    graph: AgentGraph
    agent_id: str
    evidence_note: str = ""
    evidence_gate: str = "PASS"

    @property
    def node(self) -> AgentNode:
        return self.graph.nodes[self.agent_id]


@dataclass(frozen=True)
class AgentRoundSummary:
    agent_id: str
    role: str
    rewards: tuple[float, ...]
    last_output: str = ""
    last_justification: str = ""


@dataclass(frozen=True)
class MetaSnapshot:
    query: Query
    graph: AgentGraph
    round_idx: int
    round_scores: tuple[float, ...]
    agents: tuple[AgentRoundSummary, ...] = field(default=())


class AgentBackend(Protocol):
    def execute(self, node: AgentNode, incoming: Sequence[str], query: Query, ctx: RoundContext) -> str: ...

    def reflect(self, node: AgentNode, round_idx: int, reward: float, output: str) -> str: ...


class JudgeBackend(Protocol):
    def judge_contribution(self, output: str, ctx: ContributionContext) -> JudgeVerdict: ...

    def judge_answer(self, answer: str, query: Query, ctx: RoundContext) -> float: ...


class MetaBackend(Protocol):
    def decide(self, snapshot: MetaSnapshot): ...


@dataclass
class Backends:
    agent: AgentBackend
    judge: JudgeBackend
    meta: MetaBackend


def extract_final_answer(text: str) -> str:
    """Text after the last line starting with "Final Answer:", else the whole output."""
    answer = None
    for line in text.splitlines():
        if line.strip().startswith(FINAL_ANSWER):
            answer = line.strip()[len(FINAL_ANSWER):].strip()
    return text.strip() if answer is None else answer


_FENCE = re.compile(r"^```(?:json)?\s*(.*?)\s*```$", re.S)


def parse_json_object(text: str) -> dict:
    """Parse a model reply that should be one JSON object (code fences tolerated)."""
    s = text.strip()
    m = _FENCE.match(s)
    if m:
        s = m.group(1)
    obj = json.loads(s)
    if not isinstance(obj, dict):
        raise ValueError("reply is not a JSON object")
    return obj
