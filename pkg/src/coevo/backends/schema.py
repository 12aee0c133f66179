"""Meta-controller output schema: strict parsing and canonical serialization."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Mapping

from ..graph import EdgeEdit, NewNodeSpec, StructuralDelta

TIME_CONTROLS = ("continue", "slow_again", "stop")
GRAPH_OPS = {"edge_add": "add", "edge_remove": "remove"}
DIFF_KEYS = ("nodes_added", "nodes_removed", "edges_added", "edges_removed")
TOP_KEYS = ("birth_death_pairs", "graph_edit", "graph_diff", "agent_feedback",
            "global_rationale", "time_control")
MAX_RATIONALE_SENTENCES = 3


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class BirthDeathPair:
    v_dead: str | None
    role: str
    goal: str = ""
    tools: tuple[str, ...] = ()


@dataclass(frozen=True)
class GraphEditOp:
    op: str
    src: str
    dst: str


@dataclass(frozen=True)
class AgentFeedback:
    prompt_delta: str = ""
    memory_seed: str = ""


def _empty_diff() -> dict:
    return {k: [] for k in DIFF_KEYS}


@dataclass(frozen=True)
class MetaDecision:
    birth_death_pairs: tuple[BirthDeathPair, ...] = ()
    graph_edit: tuple[GraphEditOp, ...] = ()
    graph_diff: Mapping[str, list] = field(default_factory=_empty_diff)
    agent_feedback: Mapping[str, AgentFeedback] = field(default_factory=dict)
    global_rationale: str = ""
    time_control: str = "continue"
    # set on the fallback decision when the model reply could not be used
    parse_error: str | None = field(default=None, compare=False)

    def to_delta(self) -> StructuralDelta:
        return StructuralDelta(
            birth_death_pairs=tuple((p.v_dead, NewNodeSpec(p.role, p.goal, p.tools))
                                    for p in self.birth_death_pairs),
            edge_edits=tuple(EdgeEdit(GRAPH_OPS[e.op], e.src, e.dst) for e in self.graph_edit),
        )

    def to_dict(self) -> dict:
        return {
            "birth_death_pairs": [
                {"v_dead": p.v_dead, "v_new": {"role": p.role, "goal": p.goal, "tools": list(p.tools)}}
                for p in self.birth_death_pairs
            ],
            "graph_edit": [{"op": e.op, "from": e.src, "to": e.dst} for e in self.graph_edit],
            "graph_diff": {k: list(self.graph_diff.get(k, [])) for k in DIFF_KEYS},
            "agent_feedback": {
                k: {"prompt_delta": fb.prompt_delta, "memory_seed": fb.memory_seed}
                for k, fb in self.agent_feedback.items()
            },
            "global_rationale": self.global_rationale,
            "time_control": self.time_control,
        }


def fallback_decision(reason: str) -> MetaDecision:
    """Empty decision used when the model never produced a schema-valid reply."""
    return MetaDecision(parse_error=reason)


def decision_from_delta(delta: StructuralDelta, time_control: str = "continue",
                        rationale: str = "") -> MetaDecision:
    inverse = {v: k for k, v in GRAPH_OPS.items()}
    return MetaDecision(
        birth_death_pairs=tuple(BirthDeathPair(d, s.role, s.goal, tuple(s.tools))
                                for d, s in delta.birth_death_pairs),
        graph_edit=tuple(GraphEditOp(inverse[e.op], e.src, e.dst) for e in delta.edge_edits),
        global_rationale=rationale,
        time_control=time_control,
    )


def serialize(decision: MetaDecision) -> str:
    """Canonical bytes: sorted keys, two-space indent, trailing newline."""
    return json.dumps(decision.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def sentence_count(text: str) -> int:
    return len([s for s in re.split(r"[.!?]+(?:\s+|$)", text.strip()) if s.strip()])


def _exact_keys(obj: Any, keys, where: str) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where} must be an object")
    missing = [k for k in keys if k not in obj]
    extra = sorted(set(obj) - set(keys))
    if missing:
        raise SchemaError(f"{where} is missing {missing}")
    if extra:
        raise SchemaError(f"{where} has unknown fields {extra}")


def _str(obj: Any, where: str, allow_empty: bool = True) -> str:
    if not isinstance(obj, str) or (not allow_empty and not obj):
        raise SchemaError(f"{where} must be a{'' if allow_empty else ' non-empty'} string")
    return obj


def _list(obj: Any, where: str) -> list:
    if not isinstance(obj, list):
        raise SchemaError(f"{where} must be an array")
    return obj


def parse_decision(obj: Any) -> MetaDecision:
    """Validate a decoded JSON value against the schema. Unknown fields are errors.

    The number of pairs and edits is not limited here; budgets are enforced
    by graph validation downstream.
    """
    _exact_keys(obj, TOP_KEYS, "decision")
    pairs = []
    for i, p in enumerate(_list(obj["birth_death_pairs"], "birth_death_pairs")):
        where = f"birth_death_pairs[{i}]"
        _exact_keys(p, ("v_dead", "v_new"), where)
        dead = p["v_dead"]
        if dead is not None:
            _str(dead, f"{where}.v_dead", allow_empty=False)
        _exact_keys(p["v_new"], ("role", "goal", "tools"), f"{where}.v_new")
        new = p["v_new"]
        tools = _list(new["tools"], f"{where}.v_new.tools")
        pairs.append(BirthDeathPair(
            v_dead=dead,
            role=_str(new["role"], f"{where}.v_new.role", allow_empty=False),
            goal=_str(new["goal"], f"{where}.v_new.goal"),
            tools=tuple(_str(t, f"{where}.v_new.tools[]") for t in tools),
        ))
    edits = []
    for i, e in enumerate(_list(obj["graph_edit"], "graph_edit")):
        where = f"graph_edit[{i}]"
        _exact_keys(e, ("op", "from", "to"), where)
        if e["op"] not in GRAPH_OPS:
            raise SchemaError(f"{where}.op must be edge_add or edge_remove")
        edits.append(GraphEditOp(e["op"], _str(e["from"], f"{where}.from", False),
                                 _str(e["to"], f"{where}.to", False)))
    diff = obj["graph_diff"]
    _exact_keys(diff, DIFF_KEYS, "graph_diff")
    for k in DIFF_KEYS:
        _list(diff[k], f"graph_diff.{k}")
    feedback = {}
    fb_obj = obj["agent_feedback"]
    if not isinstance(fb_obj, dict):
        raise SchemaError("agent_feedback must be an object")
    for agent_id, fb in fb_obj.items():
        _exact_keys(fb, ("prompt_delta", "memory_seed"), f"agent_feedback.{agent_id}")
        feedback[agent_id] = AgentFeedback(
            _str(fb["prompt_delta"], f"agent_feedback.{agent_id}.prompt_delta"),
            _str(fb["memory_seed"], f"agent_feedback.{agent_id}.memory_seed"),
        )
    rationale = _str(obj["global_rationale"], "global_rationale")
    if sentence_count(rationale) > MAX_RATIONALE_SENTENCES:
        raise SchemaError(f"global_rationale exceeds {MAX_RATIONALE_SENTENCES} sentences")
    tc = obj["time_control"]
    if tc not in TIME_CONTROLS:
        raise SchemaError(f"time_control must be one of {TIME_CONTROLS}, got {tc!r}")
    return MetaDecision(tuple(pairs), tuple(edits), {k: list(diff[k]) for k in DIFF_KEYS},
                        feedback, rationale, tc)


def parse_decision_text(text: str) -> MetaDecision:
    from .base import parse_json_object

    try:
        obj = parse_json_object(text)
    except (ValueError, json.JSONDecodeError) as e:
        raise SchemaError(f"not a JSON object: {e}") from e
    return parse_decision(obj)
