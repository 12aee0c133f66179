"""Synthetic fitness landscapes over (role frequencies, topology).

A landscape fixes a set of target topologies, a fitness law, a bounded score
noise and the edit universe the mutation oracle may draw from. Nodes are
matched by role, so lab graphs keep one agent per role.

Two fitness laws are provided:

``linear``
    f_v = base[role_v] - slope * d(T). Frequency independent; the fitness
    ceiling sits on a vertex of the simplex.
``target_share``
    f_v = ceiling - slope * d(T) + curvature * (1 - pi_v / t_v) where t is the
    role-share target renormalized over the roles present. The replicator rest
    point and the maximizer of the team mean both sit at pi = t, where every
    agent scores ``ceiling - slope * d(T)``.

Both laws clip to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .graph import (
    CENTRALIZED_TEMPLATE,
    AgentGraph,
    EditBudget,
    init_graph,
    topology_distance,
)
from .replicator import FitnessVector, SimplexVector

LINEAR = "linear"
TARGET_SHARE = "target_share"


@dataclass(frozen=True, eq=False)
class FitnessLandscape:
    name: str
    kind: str
    role_pool: tuple[str, ...]
    base: Mapping[str, float]
    optima: tuple[AgentGraph, ...]
    start: AgentGraph
    mutable_edges: tuple[tuple[str, str], ...]
    # (old_role, new_role): replace the old-role agent by a newborn of new_role
    role_swaps: tuple[tuple[str, str], ...] = ()
    ceiling: float = 0.8
    slope: float = 0.05
    curvature: float = 0.5
    noise_bound: float = 0.0
    budget: EditBudget = EditBudget()
    _dist_cache: dict = field(default_factory=dict, repr=False)
    _ceiling_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in (LINEAR, TARGET_SHARE):
            raise ValueError(f"unknown landscape kind {self.kind!r}")
        if not self.optima:
            raise ValueError("a landscape needs at least one optimum topology")
        if self.noise_bound < 0:
            raise ValueError("noise_bound must be nonnegative")
        if self.kind == TARGET_SHARE and any(v <= 0 for v in self.base.values()):
            raise ValueError("target shares must be positive")

    @property
    def is_linear(self) -> bool:
        return self.kind == LINEAR

    def with_noise(self, noise_bound: float) -> FitnessLandscape:
        return FitnessLandscape(
            self.name, self.kind, self.role_pool, dict(self.base), self.optima, self.start,
            self.mutable_edges, self.role_swaps, self.ceiling, self.slope, self.curvature,
            noise_bound, self.budget,
        )

    def covers(self, graph: AgentGraph) -> bool:
        return all(n.role in self.base for n in graph.nodes.values())

    def distance(self, graph: AgentGraph) -> int:
        """d(T, A): topology distance to the nearest target, roles matched."""
        key = graph.topology_key()
        d = self._dist_cache.get(key)
        if d is None:
            d = min(topology_distance(graph, t, match="role") for t in self.optima)
            self._dist_cache[key] = d
        return d

    def fitness_batch(self, P: np.ndarray, ids, graph: AgentGraph) -> np.ndarray:
        """Fitness rows for each frequency row of ``P`` (columns follow ``ids``)."""
        if not self.covers(graph):
            raise KeyError(f"landscape {self.name!r} has no fitness for some roles in the graph")
        roles = [graph.nodes[k].role for k in ids]
        shift = self.slope * self.distance(graph)
        P = np.atleast_2d(np.asarray(P, dtype=float))
        if self.kind == LINEAR:
            f = np.array([self.base[r] for r in roles]) - shift
            F = np.broadcast_to(f, P.shape)
        else:
            shares = np.array([self.base[r] for r in roles])
            t = shares / shares.sum()
            F = self.ceiling - shift + self.curvature * (1.0 - P / t)
        return np.clip(F, 0.0, 1.0)

    def fitness(self, pi: SimplexVector, graph: AgentGraph) -> FitnessVector:
        F = self.fitness_batch(pi.values[None, :], pi.ids, graph)
        return FitnessVector(pi.ids, F[0], self.noise_bound)

    def mean_fitness(self, pi: SimplexVector, graph: AgentGraph) -> float:
        return float(np.dot(pi.values, self.fitness(pi, graph).values))

    def sample_scores(self, pi: SimplexVector, graph: AgentGraph, rng: np.random.Generator) -> FitnessVector:
        """Noisy contribution scores, each within noise_bound of f_v."""
        f = self.fitness(pi, graph)
        if self.noise_bound == 0:
            return f
        noise = rng.uniform(-self.noise_bound, self.noise_bound, size=len(f.ids))
        return FitnessVector(f.ids, np.clip(f.values + noise, 0.0, 1.0), self.noise_bound)

    def optimal_frequencies(self, graph: AgentGraph) -> SimplexVector:
        ids = sorted(graph.nodes)
        if self.kind == LINEAR:
            best = max(ids, key=lambda k: (self.base[graph.nodes[k].role], k))
            return SimplexVector(tuple(ids), np.array([1.0 if k == best else 0.0 for k in ids]))
        shares = np.array([self.base[graph.nodes[k].role] for k in ids])
        return SimplexVector(tuple(ids), shares / shares.sum())

    def optimum_pairs(self) -> list[tuple[SimplexVector, AgentGraph]]:
        return [(self.optimal_frequencies(t), t) for t in self.optima]


def _template_edges_minus_plus(remove, add):
    g = init_graph(CENTRALIZED_TEMPLATE, "reflector")
    edges = (set(g.edges) - set(remove)) | set(add)
    return AgentGraph(g.nodes, frozenset(edges), g.sink)


STANDARD_SHARES = {"planner": 0.2, "searcher": 0.3, "calculator": 0.1, "verifier": 0.25, "reflector": 0.15}
LINEAR_BASE = {"planner": 0.5, "searcher": 0.9, "calculator": 0.2, "verifier": 0.7, "reflector": 0.6}

# three forward edges: the edit lattice is a 3-cube, so d <= 3
STANDARD_MUTABLE = (("searcher", "verifier"), ("calculator", "verifier"), ("calculator", "reflector"))
# six forward edges: a 6-cube for the rate-scaling sweep
WIDE_MUTABLE = STANDARD_MUTABLE + (("searcher", "calculator"), ("planner", "calculator"), ("searcher", "reflector"))


def standard_landscape(noise_bound: float = 0.05) -> FitnessLandscape:
    """Five-role centralized start, three edge edits from a search-verify target."""
    target = _template_edges_minus_plus(
        remove=[("calculator", "reflector")],
        add=[("searcher", "verifier"), ("calculator", "verifier")],
    )
    return FitnessLandscape(
        name="standard", kind=TARGET_SHARE, role_pool=CENTRALIZED_TEMPLATE,
        base=dict(STANDARD_SHARES), optima=(target,),
        start=init_graph(CENTRALIZED_TEMPLATE, "reflector"),
        mutable_edges=STANDARD_MUTABLE, noise_bound=noise_bound,
    )


def wide_landscape(noise_bound: float = 0.05) -> FitnessLandscape:
    """Six edge edits from a planner-searcher-calculator-verifier pipeline."""
    target = _template_edges_minus_plus(
        remove=[("planner", "calculator"), ("calculator", "reflector"), ("searcher", "reflector")],
        add=[("searcher", "verifier"), ("calculator", "verifier"), ("searcher", "calculator")],
    )
    return FitnessLandscape(
        name="wide", kind=TARGET_SHARE, role_pool=CENTRALIZED_TEMPLATE,
        base=dict(STANDARD_SHARES), optima=(target,),
        start=init_graph(CENTRALIZED_TEMPLATE, "reflector"),
        mutable_edges=WIDE_MUTABLE, slope=0.04, noise_bound=noise_bound,
    )


def linear_landscape(noise_bound: float = 0.0, base: Mapping[str, float] | None = None) -> FitnessLandscape:
    """Standard edit lattice with frequency-independent fitness."""
    std = standard_landscape()
    return FitnessLandscape(
        name="linear", kind=LINEAR, role_pool=CENTRALIZED_TEMPLATE,
        base=dict(base or LINEAR_BASE), optima=std.optima, start=std.start,
        mutable_edges=STANDARD_MUTABLE, noise_bound=noise_bound,
    )


def birth_death_landscape(noise_bound: float = 0.0) -> FitnessLandscape:
    """Target replaces the calculator by a researcher wired planner -> researcher -> sink.

    The swap works in both directions and the hub and sink edges of both
    roles are mutable, so every edit can be undone.
    """
    pool = CENTRALIZED_TEMPLATE + ("researcher",)
    start = init_graph(CENTRALIZED_TEMPLATE, "reflector", role_pool=pool)
    t = init_graph(("planner", "searcher", "researcher", "verifier", "reflector"), "reflector", role_pool=pool)
    return FitnessLandscape(
        name="birth_death", kind=LINEAR, role_pool=pool,
        base={**LINEAR_BASE, "researcher": 0.95}, optima=(t,), start=start,
        mutable_edges=(("planner", "researcher"), ("researcher", "reflector"),
                       ("planner", "calculator"), ("calculator", "reflector"), ("searcher", "verifier")),
        role_swaps=(("calculator", "researcher"), ("researcher", "calculator")), noise_bound=noise_bound,
    )


LANDSCAPES = {
    "standard": standard_landscape,
    "wide": wide_landscape,
    "linear": linear_landscape,
    "birth_death": birth_death_landscape,
}


def get_landscape(name: str, noise_bound: float | None = None) -> FitnessLandscape:
    try:
        factory = LANDSCAPES[name]
    except KeyError:
        raise KeyError(f"unknown landscape id {name!r}; known: {sorted(LANDSCAPES)}") from None
    land = factory()
    return land if noise_bound is None else land.with_noise(noise_bound)
