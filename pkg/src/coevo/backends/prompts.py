"""Prompt templates (packaged text assets) and message assembly."""

from __future__ import annotations

import json
import re
from functools import lru_cache
from importlib import resources
from typing import Mapping, Sequence

from ..graph import AgentGraph, AgentNode
from .base import AgentRoundSummary, ContributionContext, MetaSnapshot, Query, RubricItem

TEMPLATE_NAMES = (
    "meta_system", "meta_developer", "meta_user", "meta_schema",
    "agent_system", "reflection", "rubric_judge", "contribution_judge",
)
TASK_TEMPLATES = ("finance", "browsecomp", "plancraft", "workbench")

_SLOT = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")

ROLE_GOALS = {
    "planner": "Decompose the task into sub-goals and assign them downstream.",
    "searcher": "Gather the evidence the task needs.",
    "calculator": "Carry out any numeric computation exactly.",
    "verifier": "Check upstream claims against the evidence and flag errors.",
    "reflector": "Integrate upstream messages into the final answer.",
    "researcher": "Locate and read primary sources for missing evidence.",
}
DEFAULT_CONSTRAINT = "Stay within your role; pass concrete findings downstream."


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    if name in TASK_TEMPLATES:
        path = resources.files("coevo") / "prompts" / "tasks" / f"{name}.txt"
    elif name in TEMPLATE_NAMES:
        path = resources.files("coevo") / "prompts" / f"{name}.txt"
    else:
        raise KeyError(f"unknown template {name!r}")
    return path.read_text(encoding="utf-8")


def template_slots(template: str) -> list[str]:
    seen = []
    for m in _SLOT.finditer(template):
        if m.group(1) not in seen:
            seen.append(m.group(1))
    return seen


def fill(template: str, **slots) -> str:
    """Substitute ``{name}`` slots; other braces (JSON examples) are left alone.

    ``str.format`` cannot be used because the templates contain literal JSON.
    """
    missing = [s for s in template_slots(template) if s not in slots]
    if missing:
        raise KeyError(f"template slots left unfilled: {missing}")
    return _SLOT.sub(lambda m: str(slots[m.group(1)]), template)


def graph_json(graph: AgentGraph) -> str:
    body = {
        "sink": graph.sink,
        "generation": graph.generation,
        "nodes": [
            {"id": n.id, "role": n.role, "goal": n.goal, "tools": list(n.tools),
             "capability_weight": round(n.capability_weight, 6)}
            for n in (graph.nodes[k] for k in sorted(graph.nodes))
        ],
        "edges": [{"from": u, "to": v} for u, v in sorted(graph.edges)],
    }
    return json.dumps(body, indent=2, ensure_ascii=False)


def _fmt_scores(xs: Sequence[float]) -> str:
    return "[" + ", ".join(f"{x:.3f}" for x in xs) + "]"


def agent_summaries(agents: Sequence[AgentRoundSummary], excerpt: int = 400) -> str:
    if not agents:
        return "(none)"
    lines = []
    for a in agents:
        lines.append(f"- {a.agent_id} ({a.role}): rewards {_fmt_scores(a.rewards)}")
        if a.last_justification:
            lines.append(f"  judge: {a.last_justification[:excerpt]}")
        if a.last_output:
            lines.append(f"  last output: {a.last_output[:excerpt]}")
    return "\n".join(lines)


def task_description(query: Query) -> str:
    if query.task_profile:
        return f"{query.text}\n\nTask profile: {query.task_profile}"
    return query.text


def meta_messages(snapshot: MetaSnapshot) -> list[dict]:
    """System, developer and user parts; the output schema rides with the developer part."""
    developer = load_template("meta_developer") + "\n" + load_template("meta_schema")
    user = fill(
        load_template("meta_user"),
        task_description=task_description(snapshot.query),
        graph_json=graph_json(snapshot.graph),
        per_agent_summaries=agent_summaries(snapshot.agents),
        round_scores=_fmt_scores(snapshot.round_scores),
    )
    return [
        {"role": "system", "content": load_template("meta_system")},
        {"role": "developer", "content": developer},
        {"role": "user", "content": user},
    ]


def agent_messages(node: AgentNode, incoming: Sequence[str], query: Query) -> list[dict]:
    system = fill(
        load_template("agent_system"),
        role_name=node.role,
        role_goal=node.goal or ROLE_GOALS.get(node.role, f"Act as the {node.role}."),
        role_constraint=DEFAULT_CONSTRAINT,
        tool_specs="\n".join(f"- {t}" for t in node.tools) or "(none)",
        incoming_messages="\n\n".join(incoming) or "(none)",
    )
    user = query.text
    if node.capability_memory:
        user += "\n\nNotes from earlier rounds:\n" + "\n".join(f"- {m}" for m in node.capability_memory)
    return [{"role": "system", "content": system}, {"role": "user", "content": user}]


def reflection_messages(round_idx: int, reward: float, output: str) -> list[dict]:
    text = fill(load_template("reflection"), round_idx=round_idx, reward=f"{reward:.3f}",
                round_output=output)
    return [{"role": "user", "content": text}]


def rubric_messages(answer: str, rubric: Sequence[RubricItem]) -> list[dict]:
    text = fill(load_template("rubric_judge"), answer=answer,
                rubric_json=json.dumps([r.to_dict() for r in rubric], indent=2, ensure_ascii=False))
    return [{"role": "user", "content": text}]


def contribution_messages(output: str, ctx: ContributionContext) -> list[dict]:
    node = ctx.node
    text = fill(
        load_template("contribution_judge"),
        evidence_note=ctx.evidence_note,
        task_text=task_description(ctx.query),
        query=ctx.query.text,
        agent_id=ctx.agent_id,
        role=node.role,
        tool_names=", ".join(node.tools) or "(none)",
        PASS_or_FAIL=ctx.evidence_gate,
        output_for_judge=output,
    )
    return [{"role": "user", "content": text}]


def task_prompt(name: str, fields: Mapping[str, str]) -> str:
    return fill(load_template(name), **fields)
