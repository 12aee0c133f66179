"""Agent graph data model, structural deltas and budgeted graph editing.

Graphs are immutable values. Every edit goes through :func:`validate_delta`,
which never fails: it reports violations and returns a truncated delta that
:func:`apply_delta` will accept.
"""

from __future__ import annotations

import heapq
import json
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

DEFAULT_NODE_CAP = 20
CENTRALIZED_TEMPLATE = ("planner", "searcher", "calculator", "verifier", "reflector")

EDGE_OPS = ("add", "remove")

# violation kinds reported by validate_delta
BUDGET_OVERFLOW = "budget_overflow"
SINK_DELETION = "sink_deletion"
DANGLING_ENDPOINT = "dangling_endpoint"
DUPLICATE_EDIT = "duplicate_edit"
CYCLE = "cycle"
SELF_LOOP = "self_loop"
SINK_OUT_EDGE = "sink_out_edge"
REDUNDANT_EDIT = "redundant_edit"
UNKNOWN_ROLE = "unknown_role"
NODE_CAP = "node_cap"


class GraphError(ValueError):
    """An operation would produce an invalid agent graph."""


class DeltaNotValidated(GraphError):
    pass


@dataclass(frozen=True)
class AgentNode:
    id: str
    role: str
    capability_weight: float = 1.0
    capability_memory: tuple[str, ...] = ()
    birth_generation: int = 0
    goal: str = ""
    tools: tuple[str, ...] = ()

    def __post_init__(self):
        if not (self.capability_weight > 0 and math.isfinite(self.capability_weight)):
            raise GraphError(f"capability_weight of {self.id!r} must be positive, got {self.capability_weight}")
        if not self.id:
            raise GraphError("agent id must be non-empty")

    @property
    def identity(self) -> tuple[str, int]:
        """Key used to match nodes across graphs: (role, birth generation)."""
        return (self.role, self.birth_generation)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "role": self.role,
            "capability_weight": self.capability_weight,
            "capability_memory": list(self.capability_memory),
            "birth_generation": self.birth_generation,
            "goal": self.goal,
            "tools": list(self.tools),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> AgentNode:
        return cls(
            id=d["id"],
            role=d["role"],
            capability_weight=float(d.get("capability_weight", 1.0)),
            capability_memory=tuple(d.get("capability_memory", ())),
            birth_generation=int(d.get("birth_generation", 0)),
            goal=d.get("goal", ""),
            tools=tuple(d.get("tools", ())),
        )


@dataclass(frozen=True)
class NewNodeSpec:
    role: str
    goal: str = ""
    tools: tuple[str, ...] = ()


@dataclass(frozen=True)
class EdgeEdit:
    op: str
    src: str
    dst: str

    def __post_init__(self):
        if self.op not in EDGE_OPS:
            raise ValueError(f"edge op must be one of {EDGE_OPS}, got {self.op!r}")


@dataclass(frozen=True)
class StructuralDelta:
    """Birth/death pairs and edge edits proposed for one slow update."""

    birth_death_pairs: tuple[tuple[str | None, NewNodeSpec], ...] = ()
    edge_edits: tuple[EdgeEdit, ...] = ()
    validated: bool = field(default=False, compare=False)

    @property
    def empty(self) -> bool:
        return not self.birth_death_pairs and not self.edge_edits


@dataclass(frozen=True)
class EditBudget:
    max_birth_death_pairs: int = 2
    max_edge_edits: int = 4

    def __post_init__(self):
        if self.max_birth_death_pairs < 0 or self.max_edge_edits < 0:
            raise ValueError("edit budgets must be nonnegative")


UNBOUNDED = EditBudget(10**9, 10**9)


@dataclass(frozen=True)
class Violation:
    kind: str
    section: str  # "pair" or "edge"
    index: int
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]
    delta: StructuralDelta

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> list[str]:
        return [v.kind for v in self.violations]


def _reaches(adj: Mapping[str, set], start: str, target: str) -> bool:
    stack, seen = [start], {start}
    while stack:
        u = stack.pop()
        if u == target:
            return True
        for w in adj.get(u, ()):
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return False


def _has_cycle(node_ids: Iterable[str], edges: Iterable[tuple[str, str]]) -> bool:
    indeg = {v: 0 for v in node_ids}
    adj: dict[str, list[str]] = {v: [] for v in indeg}
    for u, v in edges:
        adj[u].append(v)
        indeg[v] += 1
    queue = [v for v, k in indeg.items() if k == 0]
    seen = 0
    while queue:
        u = queue.pop()
        seen += 1
        for w in adj[u]:
            indeg[w] -= 1
            if indeg[w] == 0:
                queue.append(w)
    return seen != len(indeg)


@dataclass(frozen=True)
class AgentGraph:
    nodes: Mapping[str, AgentNode]
    edges: frozenset[tuple[str, str]]
    sink: str
    generation: int = 0
    node_cap: int = DEFAULT_NODE_CAP
    role_pool: frozenset[str] | None = None

    def __post_init__(self):
        object.__setattr__(self, "nodes", MappingProxyType(dict(self.nodes)))
        object.__setattr__(self, "edges", frozenset(tuple(e) for e in self.edges))
        if self.role_pool is not None:
            object.__setattr__(self, "role_pool", frozenset(self.role_pool))
        self._check()

    @classmethod
    def _trusted(cls, nodes: dict, edges: frozenset, sink: str, generation: int,
                 node_cap: int, role_pool) -> AgentGraph:
        # skips invariant checks; only for edits that cannot break them
        g = object.__new__(cls)
        object.__setattr__(g, "nodes", MappingProxyType(nodes))
        object.__setattr__(g, "edges", edges)
        object.__setattr__(g, "sink", sink)
        object.__setattr__(g, "generation", generation)
        object.__setattr__(g, "node_cap", node_cap)
        object.__setattr__(g, "role_pool", role_pool)
        return g

    def _check(self) -> None:
        if self.sink not in self.nodes:
            raise GraphError(f"sink {self.sink!r} is not a node")
        if len(self.nodes) > self.node_cap:
            raise GraphError(f"{len(self.nodes)} nodes exceed the cap of {self.node_cap}")
        if self.generation < 0:
            raise GraphError("generation must be nonnegative")
        for key, node in self.nodes.items():
            if key != node.id:
                raise GraphError(f"node stored under {key!r} has id {node.id!r}")
            if self.role_pool is not None and node.role not in self.role_pool:
                raise GraphError(f"role {node.role!r} not in the role pool")
        for u, v in self.edges:
            if u == v:
                raise GraphError(f"self-loop on {u!r}")
            if u not in self.nodes or v not in self.nodes:
                raise GraphError(f"edge {u!r}->{v!r} has a missing endpoint")
            if u == self.sink:
                raise GraphError(f"sink {u!r} may not have outgoing edges")
        if _has_cycle(self.nodes, self.edges):
            raise GraphError("edge relation is cyclic")

    # -- queries -----------------------------------------------------------

    def predecessors(self, node_id: str) -> list[str]:
        return sorted(u for u, v in self.edges if v == node_id)

    def weights(self) -> dict[str, float]:
        return {k: n.capability_weight for k, n in self.nodes.items()}

    def topology_key(self) -> tuple:
        """Hashable description of (identities, edges) for caching."""
        ident = {k: n.identity for k, n in self.nodes.items()}
        return (
            tuple(sorted(ident.values())),
            tuple(sorted((ident[u], ident[v]) for u, v in self.edges)),
        )

    # -- value edits -------------------------------------------------------

    def with_weights(self, weights: Mapping[str, float]) -> AgentGraph:
        if set(weights) != set(self.nodes):
            raise GraphError("weights must cover exactly the graph's nodes")
        nodes = {k: replace(n, capability_weight=float(weights[k])) for k, n in self.nodes.items()}
        return AgentGraph._trusted(nodes, self.edges, self.sink, self.generation,
                                   self.node_cap, self.role_pool)

    def with_memory(self, records: Mapping[str, Sequence[str]]) -> AgentGraph:
        """Append text records to the named agents' capability memory."""
        nodes = dict(self.nodes)
        for k, recs in records.items():
            if k not in nodes:
                continue
            recs = tuple(r for r in recs if r)
            if recs:
                nodes[k] = replace(nodes[k], capability_memory=nodes[k].capability_memory + recs)
        return AgentGraph._trusted(nodes, self.edges, self.sink, self.generation,
                                   self.node_cap, self.role_pool)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "nodes": [self.nodes[k].to_dict() for k in sorted(self.nodes)],
            "edges": [list(e) for e in sorted(self.edges)],
            "sink": self.sink,
            "generation": self.generation,
            "node_cap": self.node_cap,
            "role_pool": sorted(self.role_pool) if self.role_pool is not None else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: Mapping) -> AgentGraph:
        nodes = [AgentNode.from_dict(n) for n in d["nodes"]]
        pool = d.get("role_pool")
        return cls(
            nodes={n.id: n for n in nodes},
            edges=frozenset((u, v) for u, v in d["edges"]),
            sink=d["sink"],
            generation=int(d.get("generation", 0)),
            node_cap=int(d.get("node_cap", DEFAULT_NODE_CAP)),
            role_pool=frozenset(pool) if pool is not None else None,
        )

    @classmethod
    def from_json(cls, s: str) -> AgentGraph:
        return cls.from_dict(json.loads(s))


def init_graph(roles: Sequence[str], sink_role: str, *, node_cap: int = DEFAULT_NODE_CAP,
               role_pool: Iterable[str] | None = None) -> AgentGraph:
    """Build the centralized starting team, one agent per role.

    The first listed non-sink role is the hub with an edge to every other
    agent, and every non-sink agent feeds the sink. Agent ids equal roles.
    """
    roles = list(roles)
    if not roles:
        raise GraphError("role list is empty")
    if sink_role not in roles:
        raise GraphError(f"sink role {sink_role!r} is not among the roles")
    if len(set(roles)) != len(roles):
        raise GraphError("roles must be distinct")
    if len(roles) > node_cap:
        raise GraphError(f"{len(roles)} roles exceed the node cap of {node_cap}")
    pool = frozenset(role_pool) if role_pool is not None else None
    nodes = {r: AgentNode(id=r, role=r) for r in roles}
    others = [r for r in roles if r != sink_role]
    edges = {(r, sink_role) for r in others}
    if others:
        hub = others[0]
        edges |= {(hub, r) for r in roles if r != hub}
    return AgentGraph(nodes=nodes, edges=frozenset(edges), sink=sink_role,
                      generation=0, node_cap=node_cap, role_pool=pool)


def _fresh_id(role: str, taken: set[str]) -> str:
    if role not in taken:
        return role
    k = 2
    while f"{role}#{k}" in taken:
        k += 1
    return f"{role}#{k}"


@dataclass
class _Simulation:
    violations: list[Violation]
    pairs: list[tuple[str | None, NewNodeSpec]]
    edits: list[EdgeEdit]
    born: dict[str, NewNodeSpec]  # new id -> spec, in birth order
    dead: list[str]
    edges: set[tuple[str, str]]


def _simulate(graph: AgentGraph, delta: StructuralDelta, budget: EditBudget) -> _Simulation:
    viol: list[Violation] = []
    live = set(graph.nodes)
    taken = set(graph.nodes)
    dead: list[str] = []
    born: dict[str, NewNodeSpec] = {}
    born_roles: set[str] = set()
    pairs: list[tuple[str | None, NewNodeSpec]] = []

    for i, (dead_id, spec) in enumerate(delta.birth_death_pairs):
        kind = detail = None
        if dead_id is not None and dead_id == graph.sink:
            kind, detail = SINK_DELETION, dead_id
        elif dead_id is not None and dead_id in dead:
            kind, detail = DUPLICATE_EDIT, f"{dead_id} already removed"
        elif dead_id is not None and dead_id not in live:
            kind, detail = DANGLING_ENDPOINT, f"unknown agent {dead_id}"
        elif not spec.role or (graph.role_pool is not None and spec.role not in graph.role_pool):
            kind, detail = UNKNOWN_ROLE, spec.role
        elif spec.role in born_roles:
            # two same-role births in one update would share an identity
            kind, detail = DUPLICATE_EDIT, f"second birth of role {spec.role}"
        elif len(live) - (dead_id is not None) + 1 > graph.node_cap:
            kind, detail = NODE_CAP, f"cap {graph.node_cap}"
        if kind is None and len(pairs) >= budget.max_birth_death_pairs:
            kind, detail = BUDGET_OVERFLOW, f"B_V={budget.max_birth_death_pairs}"
        if kind is not None:
            viol.append(Violation(kind, "pair", i, detail))
            continue
        if dead_id is not None:
            live.discard(dead_id)
            dead.append(dead_id)
        new_id = _fresh_id(spec.role, taken)
        taken.add(new_id)
        live.add(new_id)
        born[new_id] = spec
        born_roles.add(spec.role)
        pairs.append((dead_id, spec))

    edges = {(u, v) for u, v in graph.edges if u in live and v in live}
    adj: dict[str, set] = {}
    for u, v in edges:
        adj.setdefault(u, set()).add(v)
    seen_edits: set[EdgeEdit] = set()
    edits: list[EdgeEdit] = []
    for i, e in enumerate(delta.edge_edits):
        kind = detail = None
        if e in seen_edits:
            kind = DUPLICATE_EDIT
        elif e.src not in live or e.dst not in live:
            kind, detail = DANGLING_ENDPOINT, f"{e.src}->{e.dst}"
        elif e.src == e.dst:
            kind = SELF_LOOP
        elif e.op == "add":
            if e.src == graph.sink:
                kind = SINK_OUT_EDGE
            elif (e.src, e.dst) in edges:
                kind = REDUNDANT_EDIT
            elif _reaches(adj, e.dst, e.src):
                kind, detail = CYCLE, f"{e.src}->{e.dst}"
        elif (e.src, e.dst) not in edges:
            kind = REDUNDANT_EDIT
        seen_edits.add(e)
        if kind is None and len(edits) >= budget.max_edge_edits:
            kind, detail = BUDGET_OVERFLOW, f"B_E={budget.max_edge_edits}"
        if kind is not None:
            viol.append(Violation(kind, "edge", i, detail or f"{e.op} {e.src}->{e.dst}"))
            continue
        if e.op == "add":
            edges.add((e.src, e.dst))
            adj.setdefault(e.src, set()).add(e.dst)
        else:
            edges.discard((e.src, e.dst))
            adj[e.src].discard(e.dst)
        edits.append(e)

    return _Simulation(viol, pairs, edits, born, dead, edges)


def validate_delta(graph: AgentGraph, delta: StructuralDelta, budget: EditBudget) -> ValidationReport:
    """Report every violated constraint and the legal, budget-truncated delta.

    Edits are considered in listed order; illegal ones are dropped and legal
    ones are kept until the budget is spent.
    """
    sim = _simulate(graph, delta, budget)
    kept = StructuralDelta(tuple(sim.pairs), tuple(sim.edits), validated=True)
    return ValidationReport(tuple(sim.violations), kept)


def apply_delta(graph: AgentGraph, delta: StructuralDelta, *,
                newborn_weight: float | None = None) -> AgentGraph:
    """Apply a validated delta: deaths, then births, then edge edits in order.

    Newborns get ``newborn_weight`` (default 1.0) and empty memory. The
    returned graph's generation is one higher.
    """
    if not delta.validated:
        raise DeltaNotValidated("apply_delta requires the delta returned by validate_delta")
    sim = _simulate(graph, delta, UNBOUNDED)
    if sim.violations:
        v = sim.violations[0]
        raise GraphError(f"delta does not apply to this graph: {v.kind} ({v.detail})")
    gen = graph.generation + 1
    w = 1.0 if newborn_weight is None else float(newborn_weight)
    nodes = {k: n for k, n in graph.nodes.items() if k not in sim.dead}
    for new_id, spec in sim.born.items():
        nodes[new_id] = AgentNode(id=new_id, role=spec.role, capability_weight=w,
                                  birth_generation=gen, goal=spec.goal, tools=tuple(spec.tools))
    return AgentGraph(nodes=nodes, edges=frozenset(sim.edges), sink=graph.sink,
                      generation=gen, node_cap=graph.node_cap, role_pool=graph.role_pool)


def normalize_weights(graph: AgentGraph) -> AgentGraph:
    """Rescale capability weights to sum to one (weights stored as frequencies)."""
    w = graph.weights()
    total = sum(w.values())
    return graph.with_weights({k: v / total for k, v in w.items()})


def apply_delta_neutral(graph: AgentGraph, delta: StructuralDelta) -> AgentGraph:
    """Apply a validated delta; newborns enter at the survivors' mean weight.

    Weights are renormalized afterwards, so a birth neither rewards nor
    penalizes the incumbents relative to each other. Without births or
    deaths the weights are left exactly as they were.
    """
    if not delta.birth_death_pairs:
        return apply_delta(graph, delta)
    dead = {d for d, _ in delta.birth_death_pairs if d is not None}
    survivors = [n.capability_weight for k, n in graph.nodes.items() if k not in dead]
    w = sum(survivors) / len(survivors) if survivors else 1.0
    return normalize_weights(apply_delta(graph, delta, newborn_weight=w))


def execution_order(graph: AgentGraph) -> list[str]:
    """Topological order, lexicographically smallest, with the sink last."""
    indeg = {v: 0 for v in graph.nodes}
    adj: dict[str, list[str]] = {v: [] for v in graph.nodes}
    for u, v in graph.edges:
        adj[u].append(v)
        indeg[v] += 1
    heap = [v for v, k in indeg.items() if k == 0 and v != graph.sink]
    heapq.heapify(heap)
    order = []
    while heap:
        u = heapq.heappop(heap)
        order.append(u)
        for w in adj[u]:
            indeg[w] -= 1
            if indeg[w] == 0 and w != graph.sink:
                heapq.heappush(heap, w)
    if indeg[graph.sink] != 0 or len(order) != len(graph.nodes) - 1:
        raise GraphError("cycle detected")
    order.append(graph.sink)
    return order


def _node_key(node: AgentNode, match: str):
    if match == "identity":
        return node.identity
    if match == "role":
        return node.role
    raise ValueError(f"unknown node matching {match!r}")


def topology_distance(t1: AgentGraph, t2: AgentGraph, *, match: str = "identity") -> int:
    """|V1 △ V2| + |E1 △ E2| with nodes matched by identity (or by role).

    Counts are multiset differences, so duplicated keys still give a metric.
    """
    k1 = {k: _node_key(n, match) for k, n in t1.nodes.items()}
    k2 = {k: _node_key(n, match) for k, n in t2.nodes.items()}
    n1, n2 = Counter(k1.values()), Counter(k2.values())
    e1 = Counter((k1[u], k1[v]) for u, v in t1.edges)
    e2 = Counter((k2[u], k2[v]) for u, v in t2.edges)
    return _l1(n1, n2) + _l1(e1, e2)


def _l1(a: Counter, b: Counter) -> int:
    return sum(abs(a[k] - b[k]) for k in a.keys() | b.keys())
