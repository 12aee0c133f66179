"""Two-timescale run loop: fast capability rounds, gated slow topology updates.

Each round every agent runs once in topological order, the judge scores the
outputs, capability weights take one replicator step over the scores and
each agent appends a self-reflection to its memory. Every K-th round whose
answer score is below the threshold triggers a slow update: the meta
controller proposes a structural delta, which is validated against the edit
budget and applied.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .backends.base import (
    AgentRoundSummary,
    BackendError,
    Backends,
    ContributionContext,
    MetaSnapshot,
    Query,
    RoundContext,
    RubricError,
    clamp01,
    extract_final_answer,
)
from .backends.schema import MetaDecision, fallback_decision
from .graph import (
    CENTRALIZED_TEMPLATE,
    DEFAULT_NODE_CAP,
    AgentGraph,
    EditBudget,
    apply_delta_neutral,
    execution_order,
    init_graph,
    validate_delta,
)
from .replicator import FitnessVector, replicator_step, to_frequencies

log = logging.getLogger(__name__)

TRACE_FORMAT_VERSION = 1
STOP_THRESHOLD = "threshold"
STOP_BUDGET = "budget_exhausted"
STOP_SIGNAL = "stop_signal"
STOP_REASONS = (STOP_THRESHOLD, STOP_BUDGET, STOP_SIGNAL)


@dataclass(frozen=True)
class RunConfig:
    round_cap: int = 10
    slow_interval: int = 2
    success_threshold: float = 1.0
    budget: EditBudget = EditBudget()
    eta: float = 0.5
    node_cap: int = DEFAULT_NODE_CAP
    seed: int = 0
    roles: tuple[str, ...] = CENTRALIZED_TEMPLATE
    sink_role: str = "reflector"
    role_pool: tuple[str, ...] | None = None
    max_workers: int = 1
    reflect: bool = True

    def __post_init__(self):
        object.__setattr__(self, "roles", tuple(self.roles))
        if self.role_pool is not None:
            object.__setattr__(self, "role_pool", tuple(self.role_pool))
        if self.round_cap < 1 or self.slow_interval < 1:
            raise ValueError("round_cap and slow_interval must be positive")
        if self.slow_interval > self.round_cap:
            raise ValueError("slow_interval may not exceed round_cap")
        if not 0.0 <= self.success_threshold <= 1.0:
            raise ValueError("success_threshold must lie in [0, 1]")
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError("eta must be positive")
        if self.node_cap < 1 or self.max_workers < 1:
            raise ValueError("node_cap and max_workers must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["roles"] = list(self.roles)
        d["role_pool"] = list(self.role_pool) if self.role_pool is not None else None
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> RunConfig:
        d = dict(d)
        if "budget" in d and not isinstance(d["budget"], EditBudget):
            d["budget"] = EditBudget(**d["budget"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown run config fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class SlowUpdateRecord:
    time_control: str
    pairs_applied: int
    edges_applied: int
    violations: list[str]
    parse_error: str | None
    generation: int
    nodes: int
    edges: int
    diff: dict
    graph: dict

    @property
    def rejected(self) -> bool:
        return self.parse_error is not None


@dataclass
class RoundTrace:
    round: int
    outputs: dict[str, str]
    contributions: dict[str, float]
    justifications: dict[str, str]
    frequencies: dict[str, float]
    team_mean: float
    weighted_mean: float
    answer: str
    answer_score: float
    generation: int
    failures: dict[str, str] = field(default_factory=dict)
    slow_update: SlowUpdateRecord | None = None
    stop_reason: str | None = None

    def __post_init__(self):
        for k, c in self.contributions.items():
            if not 0.0 <= c <= 1.0:
                raise ValueError(f"contribution of {k} outside [0, 1]")
        if not 0.0 <= self.answer_score <= 1.0:
            raise ValueError("answer score outside [0, 1]")

    @property
    def m(self) -> float:
        return self.weighted_mean

    def to_dict(self) -> dict:
        d = asdict(self)
        d["type"] = "round"
        return d


@dataclass
class InstanceResult:
    query_id: str
    final_answer: str
    stop_reason: str
    rounds_used: int
    slow_updates: int
    traces: list[RoundTrace]
    final_graph: AgentGraph

    @property
    def final_score(self) -> float:
        return self.traces[-1].answer_score


# -- fast loop ---------------------------------------------------------------

def _levels(graph: AgentGraph, order: Sequence[str]) -> list[list[str]]:
    """Group nodes by longest-path depth; nodes within a level are independent."""
    depth: dict[str, int] = {}
    for v in order:
        preds = graph.predecessors(v)
        depth[v] = 1 + max((depth[u] for u in preds), default=-1)
    levels: list[list[str]] = [[] for _ in range(max(depth.values()) + 1)]
    for v in order:
        levels[depth[v]].append(v)
    return levels


def _call(fn, *args):
    try:
        return fn(*args), None
    except BackendError as e:
        return None, f"{type(e).__name__}: {e}"


def _map(pool: ThreadPoolExecutor | None, fn, items):
    if pool is None or len(items) < 2:
        return [fn(x) for x in items]
    return list(pool.map(fn, items))


def fast_round(graph: AgentGraph, backends: Backends, query: Query, t: int, config: RunConfig,
               pool: ThreadPoolExecutor | None = None) -> tuple[RoundTrace, AgentGraph]:
    order = execution_order(graph)
    rank = {v: i for i, v in enumerate(order)}
    ctx = RoundContext(query, t, graph)
    outputs: dict[str, str] = {}
    failures: dict[str, str] = {}

    def run_agent(v):
        preds = sorted(graph.predecessors(v), key=rank.__getitem__)
        incoming = [outputs[u] for u in preds if u not in failures]
        return _call(backends.agent.execute, graph.nodes[v], incoming, query, ctx)

    for level in _levels(graph, order):
        for v, (out, err) in zip(level, _map(pool, run_agent, level)):
            outputs[v] = out if err is None else ""
            if err is not None:
                failures[v] = err
                log.warning("agent %s failed in round %d: %s", v, t, err)

    def judge(v):
        if v in failures:
            return 0.0, f"agent_failure: {failures[v]}"
        cctx = ContributionContext(query, t, graph, v)
        verdict, err = _call(backends.judge.judge_contribution, outputs[v], cctx)
        if err is not None:
            return 0.0, f"judge_failure: {err}"
        return clamp01(verdict.score), verdict.reason

    judged = dict(zip(order, _map(pool, judge, order)))
    contributions = {v: judged[v][0] for v in order}
    justifications = {v: judged[v][1] for v in order}

    pi = to_frequencies(graph.weights())
    scores = FitnessVector(tuple(order), np.array([contributions[v] for v in order]))
    c = np.array([contributions[k] for k in pi.ids])
    weighted = float(np.dot(pi.values, c))
    new_pi = replicator_step(pi, scores, config.eta)
    updated = graph.with_weights(new_pi.as_dict())

    if config.reflect:
        def reflect(v):
            text, err = _call(backends.agent.reflect, graph.nodes[v], t, contributions[v], outputs[v])
            return "" if err else (text or "")

        live = [v for v in order if v not in failures]
        notes = dict(zip(live, _map(pool, reflect, live)))
        updated = updated.with_memory({v: [f"[round {t}] {s}"] for v, s in notes.items() if s})

    answer = extract_final_answer(outputs[graph.sink]) if graph.sink not in failures else ""
    try:
        s = backends.judge.judge_answer(answer, query, ctx)
        s = clamp01(s) if s == s else 0.0
    except (BackendError, RubricError) as e:
        log.warning("answer judge failed in round %d: %s", t, e)
        s = 0.0

    trace = RoundTrace(
        round=t, outputs=outputs, contributions=contributions, justifications=justifications,
        frequencies=pi.as_dict(), team_mean=float(np.mean(c)), weighted_mean=weighted,
        answer=answer, answer_score=s, generation=graph.generation, failures=failures,
    )
    return trace, updated


# -- slow loop ---------------------------------------------------------------

def _snapshot(graph: AgentGraph, history: Sequence[RoundTrace], query: Query, t: int) -> MetaSnapshot:
    agents = []
    for v in sorted(graph.nodes):
        seen = [h for h in history if v in h.contributions]
        last = seen[-1] if seen else None
        agents.append(AgentRoundSummary(
            agent_id=v, role=graph.nodes[v].role,
            rewards=tuple(h.contributions[v] for h in seen),
            last_output=last.outputs[v] if last else "",
            last_justification=last.justifications[v] if last else "",
        ))
    return MetaSnapshot(query, graph, t, tuple(h.answer_score for h in history), tuple(agents))


def graph_diff(before: AgentGraph, after: AgentGraph) -> dict:
    return {
        "nodes_added": sorted(set(after.nodes) - set(before.nodes)),
        "nodes_removed": sorted(set(before.nodes) - set(after.nodes)),
        "edges_added": [list(e) for e in sorted(after.edges - before.edges)],
        "edges_removed": [list(e) for e in sorted(before.edges - after.edges)],
    }


def slow_update(graph: AgentGraph, history: Sequence[RoundTrace], meta, budget: EditBudget,
                query: Query | None = None, t: int | None = None) -> tuple[AgentGraph, SlowUpdateRecord]:
    """One meta-controller decision, validated against ``budget`` and applied.

    A decision that could not be parsed leaves the graph untouched; anything
    else advances the generation, even when every edit was rejected.
    """
    query = query or Query("", "")
    t = history[-1].round if t is None and history else (t or 0)
    decision, err = _call(meta.decide, _snapshot(graph, history, query, t))
    if err is not None:
        decision = fallback_decision(err)
    if decision.parse_error is not None:
        log.warning("meta decision rejected: %s", decision.parse_error)
        new = graph
        report_kinds: list[str] = ["schema_violation"]
        pairs = edges = 0
    else:
        report = validate_delta(graph, decision.to_delta(), budget)
        new = apply_delta_neutral(graph, report.delta)
        new = new.with_memory(_feedback_records(decision, new))
        report_kinds = [v.kind for v in report.violations]
        pairs, edges = len(report.delta.birth_death_pairs), len(report.delta.edge_edits)
    rec = SlowUpdateRecord(
        time_control=decision.time_control, pairs_applied=pairs, edges_applied=edges,
        violations=report_kinds, parse_error=decision.parse_error, generation=new.generation,
        nodes=len(new.nodes), edges=len(new.edges), diff=graph_diff(graph, new), graph=new.to_dict(),
    )
    return new, rec


def _feedback_records(decision: MetaDecision, graph: AgentGraph) -> dict[str, list[str]]:
    out = {}
    for agent_id, fb in decision.agent_feedback.items():
        if agent_id in graph.nodes:
            recs = []
            if fb.prompt_delta:
                recs.append(f"[meta prompt] {fb.prompt_delta}")
            if fb.memory_seed:
                recs.append(f"[meta memory] {fb.memory_seed}")
            out[agent_id] = recs
    return out


# -- full loop ---------------------------------------------------------------

def initial_graph(config: RunConfig) -> AgentGraph:
    return init_graph(config.roles, config.sink_role, node_cap=config.node_cap, role_pool=config.role_pool)


def run_instance(query: Query, config: RunConfig, backends: Backends,
                 writer: TraceWriter | None = None) -> InstanceResult:
    graph = initial_graph(config)
    if writer is not None:
        writer.header(query, config, graph)
    traces: list[RoundTrace] = []
    slow = 0
    pool = ThreadPoolExecutor(config.max_workers) if config.max_workers > 1 else None
    try:
        t = 0
        while True:
            trace, graph = fast_round(graph, backends, query, t, config, pool)
            traces.append(trace)
            stop = None
            s = trace.answer_score
            if (t + 1) % config.slow_interval == 0 and s < config.success_threshold:
                window = traces[-config.slow_interval:]
                graph, rec = slow_update(graph, window, backends.meta, config.budget, query, t)
                trace.slow_update = rec
                slow += 1
                if rec.time_control == "stop":
                    stop = STOP_SIGNAL
            t += 1
            if s >= config.success_threshold:
                stop = STOP_THRESHOLD
            elif stop is None and t >= config.round_cap:
                stop = STOP_BUDGET
            trace.stop_reason = stop
            if writer is not None:
                writer.round(trace)
            if stop is not None:
                break
    finally:
        if pool is not None:
            pool.shutdown()
    return InstanceResult(query.id, traces[-1].answer, stop, len(traces), slow, traces, graph)


# -- traces ------------------------------------------------------------------

def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


class TraceWriter:
    """Append-only JSONL: one header line, then one line per round."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "a", encoding="utf-8")

    def _line(self, obj) -> None:
        self._fh.write(_dumps(obj) + "\n")
        self._fh.flush()

    def header(self, query: Query, config: RunConfig, graph: AgentGraph) -> None:
        self._line({"type": "header", "format_version": TRACE_FORMAT_VERSION,
                    "query": query.to_dict(), "config": config.to_dict(), "graph": graph.to_dict()})

    def round(self, trace: RoundTrace) -> None:
        self._line(trace.to_dict())

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# -- mean-increment check ----------------------------------------------------

@dataclass
class IncrementSummary:
    m: list[float]
    deltas: list[float]
    mean_delta: float
    frac_positive: float


def _m_value(tr, weighted: bool) -> float:
    if isinstance(tr, RoundTrace):
        return tr.weighted_mean if weighted else tr.team_mean
    if isinstance(tr, Mapping):
        return float(tr["weighted_mean" if weighted else "team_mean"])
    return float(tr)


def increment_check(traces: Iterable, weighted: bool = True) -> IncrementSummary:
    """Round-to-round increments of the team mean contribution m_t.

    ``traces`` are RoundTraces, their dicts, or plain m_t values. By default
    m_t is the frequency-weighted mean; pass ``weighted=False`` for the
    unweighted mean over agents.
    """
    m = [_m_value(tr, weighted) for tr in traces]
    if len(m) < 2:
        raise ValueError("need at least two rounds")
    d = np.diff(m)
    return IncrementSummary(m=m, deltas=d.tolist(), mean_delta=float(d.mean()),
                            frac_positive=float(np.mean(d > 0)))
