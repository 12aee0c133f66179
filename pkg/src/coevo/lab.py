"""Dynamics lab: Lyapunov function, biased mutation oracle and Monte-Carlo
experiments for the two-timescale replicator-mutator process.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .graph import (
    AgentGraph,
    EdgeEdit,
    NewNodeSpec,
    StructuralDelta,
    apply_delta,
    apply_delta_neutral,
    normalize_weights,
    validate_delta,
)
from .landscape import FitnessLandscape
from .replicator import SimplexVector, replicator_step, to_frequencies

GRID_RESOLUTION = 0.01
FULL_GRID_AGENTS = 4
MAX_GRID_AGENTS = 6


class OracleExhausted(RuntimeError):
    """No distance-decreasing edit exists although d(T, A) > 0."""


# -- fitness ceiling ---------------------------------------------------------

@lru_cache(maxsize=16)
def simplex_grid(n: int, divisions: int) -> np.ndarray:
    """All points of the n-simplex with coordinates in multiples of 1/divisions."""
    if n == 1:
        return np.ones((1, 1))
    rows = []
    # stars and bars: choose n-1 bar positions among divisions + n - 1 slots
    for bars in itertools.combinations(range(divisions + n - 1), n - 1):
        prev, parts = -1, []
        for b in bars:
            parts.append(b - prev - 1)
            prev = b
        parts.append(divisions + n - 1 - prev - 1)
        rows.append(parts)
    grid = np.array(rows, dtype=float) / divisions
    grid.setflags(write=False)
    return grid


def _local_grid(center: np.ndarray, radius: int, divisions: int) -> np.ndarray:
    n = len(center)
    base = np.rint(center * divisions).astype(int)
    offsets = np.array(list(itertools.product(range(-radius, radius + 1), repeat=n - 1)))
    head = base[: n - 1] + offsets
    last = divisions - head.sum(axis=1)
    pts = np.column_stack([head, last])
    pts = pts[(pts >= 0).all(axis=1)]
    return pts / divisions


def grid_ceiling(landscape: FitnessLandscape, graph: AgentGraph,
                 resolution: float = GRID_RESOLUTION) -> float:
    """Brute-force max of the team mean fitness over a simplex grid.

    Up to four agents use the full grid. Five or six agents use a coarse grid
    at five times the resolution, refined on the fine grid around the best
    coarse point.
    """
    ids = sorted(graph.nodes)
    n = len(ids)
    if n > MAX_GRID_AGENTS:
        raise ValueError(f"grid search supports at most {MAX_GRID_AGENTS} active agents, got {n}")
    divisions = int(round(1 / resolution))

    def best(P):
        F = landscape.fitness_batch(P, ids, graph)
        vals = (P * F).sum(axis=1)
        i = int(np.argmax(vals))
        return float(vals[i]), P[i]

    if n <= FULL_GRID_AGENTS:
        return best(simplex_grid(n, divisions))[0]
    coarse = max(1, divisions // 5)
    v0, x0 = best(simplex_grid(n, coarse))
    v1, _ = best(_local_grid(x0, divisions // coarse, divisions))
    return max(v0, v1)


def fitness_ceiling(graph: AgentGraph, landscape: FitnessLandscape) -> float:
    """max over pi of the team mean fitness under this topology."""
    if not landscape.covers(graph):
        raise KeyError(f"landscape {landscape.name!r} is undefined for this topology")
    key = graph.topology_key()
    cached = landscape._ceiling_cache.get(key)
    if cached is not None:
        return cached
    if landscape.is_linear:
        pi = SimplexVector.uniform(sorted(graph.nodes))
        value = float(landscape.fitness(pi, graph).values.max())
    else:
        value = grid_ceiling(landscape, graph)
    landscape._ceiling_cache[key] = value
    return value


# -- Lyapunov function -------------------------------------------------------

def lyapunov_terms(graph: AgentGraph, landscape: FitnessLandscape) -> tuple[int, float]:
    """(d(T, A), fbar*(T) - fbar(pi, T)) for the graph's current weights."""
    pi = to_frequencies(graph.weights())
    fbar = landscape.mean_fitness(pi, graph)
    # the grid can miss the true peak; the current state is a valid lower bound too
    fstar = max(fitness_ceiling(graph, landscape), fbar)
    return landscape.distance(graph), fstar - fbar


def lyapunov(graph: AgentGraph, landscape: FitnessLandscape, eta: float) -> float:
    if not eta > 0:
        raise ValueError("eta must be positive")
    d, gap = lyapunov_terms(graph, landscape)
    return d + eta * gap


def check_optima(landscape: FitnessLandscape, step: float = GRID_RESOLUTION) -> bool:
    """True if every listed optimum's frequencies survive all pairwise mass shifts."""
    for pi, t in landscape.optimum_pairs():
        base = landscape.mean_fitness(pi, t)
        x = pi.values
        for i, j in itertools.permutations(range(len(x)), 2):
            if x[i] < step:
                continue
            y = x.copy()
            y[i] -= step
            y[j] += step
            if landscape.mean_fitness(SimplexVector(pi.ids, y / y.sum()), t) > base + 1e-12:
                return False
    return True


# -- mutation oracle ---------------------------------------------------------

def candidate_edits(graph: AgentGraph, landscape: FitnessLandscape) -> list[StructuralDelta]:
    """Single legal edits from the landscape's edit universe, in a fixed order."""
    out = []
    for u, v in sorted(landscape.mutable_edges):
        if u not in graph.nodes or v not in graph.nodes:
            continue
        op = "remove" if (u, v) in graph.edges else "add"
        out.append(StructuralDelta(edge_edits=(EdgeEdit(op, u, v),)))
    by_role = {n.role: k for k, n in sorted(graph.nodes.items())}
    for old, new in landscape.role_swaps:
        if old in by_role and new not in by_role:
            out.append(StructuralDelta(birth_death_pairs=((by_role[old], NewNodeSpec(new)),)))
    legal = []
    for delta in out:
        if validate_delta(graph, delta, landscape.budget).ok:
            legal.append(delta)
    return legal


def score_edits(graph: AgentGraph, landscape: FitnessLandscape) -> list[tuple[StructuralDelta, int]]:
    """Each candidate edit with the distance it leads to."""
    scored = []
    for delta in candidate_edits(graph, landscape):
        rep = validate_delta(graph, delta, landscape.budget)
        scored.append((delta, landscape.distance(apply_delta(graph, rep.delta))))
    return scored


def biased_mutation_oracle(graph: AgentGraph, landscape: FitnessLandscape, p: float,
                           rng: np.random.Generator) -> StructuralDelta:
    """One synthetic meta-controller edit that improves with probability exactly p.

    With probability p a uniformly chosen distance-decreasing edit; otherwise a
    uniformly chosen legal edit that does not decrease the distance, or no
    edit if every legal edit decreases it.
    """
    if not 0.5 < p <= 1:
        raise ValueError(f"p must lie in (0.5, 1], got {p}")
    d = landscape.distance(graph)
    if d == 0:
        return StructuralDelta()
    scored = score_edits(graph, landscape)
    improving = [e for e, dn in scored if dn < d]
    other = [e for e, dn in scored if dn >= d]
    if rng.random() < p:
        if not improving:
            raise OracleExhausted(f"no distance-decreasing edit at d={d}")
        return improving[int(rng.integers(len(improving)))]
    if not other:
        return StructuralDelta()
    return other[int(rng.integers(len(other)))]


# -- experiments -------------------------------------------------------------

@dataclass
class ContractionReport:
    lyapunov: list[float]
    gamma_hat: float
    floor: float
    cycles_to_threshold: int | None
    distances: list[int] = field(default_factory=list)
    gaps: list[float] = field(default_factory=list)
    threshold: float = 0.0
    predicted_cycles: float | None = None
    divergent: bool = False
    exhausted: bool = False
    seed: int | None = None
    p: float = 0.0
    eta: float = 0.0
    K: int = 1
    noise_bound: float = 0.0
    landscape: str = ""

    def __post_init__(self):
        if any(v < 0 for v in self.lyapunov):
            raise ValueError("Lyapunov values must be nonnegative")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("gamma_hat", "predicted_cycles"):
            if isinstance(d[k], float) and not math.isfinite(d[k]):
                d[k] = None
        return d


def residual_floor(values: Sequence[float], tail: float = 0.2) -> float:
    n = max(1, int(math.ceil(tail * len(values))))
    return float(np.mean(values[-n:]))


def fit_contraction(values: Sequence[float], floor: float | None = None) -> float:
    """gamma_hat = 1 - exp(slope) from OLS of log(L_t - floor) on t.

    Uses the leading run of cycles with L_t above the floor; NaN when fewer
    than two such cycles exist.
    """
    values = np.asarray(values, dtype=float)
    if floor is None:
        floor = residual_floor(values)
    excess = values - floor
    n = 0
    while n < len(excess) and excess[n] > 0:
        n += 1
    if n < 2:
        return float("nan")
    t = np.arange(n)
    slope = np.polyfit(t, np.log(excess[:n]), 1)[0]
    return float(1.0 - math.exp(slope))


def predicted_cycles(L0: float, gamma: float, eta: float, noise_bound: float) -> float | None:
    """(1/gamma) log(L0 / (eta eps)); None when already below the target."""
    target = eta * noise_bound
    if target <= 0 or L0 <= target:
        return None
    return math.log(L0 / target) / gamma


def run_contraction_experiment(landscape: FitnessLandscape, p: float, eta: float, K: int,
                               cycles: int, seed: int) -> ContractionReport:
    """Alternate K noisy replicator steps with one oracle mutation per cycle."""
    if not p > 0.5:
        raise ValueError("p must exceed 1/2")
    if K < 1 or cycles < 1:
        raise ValueError("K and cycles must be positive")
    rng = np.random.default_rng(seed)
    graph = normalize_weights(landscape.start)
    d, gap = lyapunov_terms(graph, landscape)
    dists, gaps, L = [d], [gap], [d + eta * gap]
    exhausted = False
    for _ in range(cycles):
        pi = to_frequencies(graph.weights())
        for _ in range(K):
            scores = landscape.sample_scores(pi, graph, rng)
            pi = replicator_step(pi, scores, eta)
        graph = graph.with_weights(pi.as_dict())
        try:
            delta = biased_mutation_oracle(graph, landscape, p, rng)
        except OracleExhausted:
            exhausted = True
            delta = StructuralDelta()
        rep = validate_delta(graph, delta, landscape.budget)
        graph = apply_delta_neutral(graph, rep.delta)
        d, gap = lyapunov_terms(graph, landscape)
        dists.append(d)
        gaps.append(gap)
        L.append(d + eta * gap)

    threshold = eta * landscape.noise_bound
    hit = next((i for i, v in enumerate(L) if v <= threshold), None)
    floor = residual_floor(L)
    gamma = 2 * p - 1
    return ContractionReport(
        lyapunov=L, gamma_hat=fit_contraction(L, floor), floor=floor, cycles_to_threshold=hit,
        distances=dists, gaps=gaps, threshold=threshold,
        predicted_cycles=predicted_cycles(L[0], gamma, eta, landscape.noise_bound),
        divergent=floor > L[0], exhausted=exhausted, seed=seed, p=p, eta=eta, K=K,
        noise_bound=landscape.noise_bound, landscape=landscape.name,
    )


def bootstrap_gamma(reports: Sequence[ContractionReport], n_boot: int = 1000,
                    seed: int = 0, level: float = 0.95) -> tuple[float, float, float]:
    """gamma_hat of the seed-averaged Lyapunov curve with a bootstrap interval over seeds."""
    curves = np.array([r.lyapunov for r in reports])
    point = fit_contraction(curves.mean(axis=0))
    rng = np.random.default_rng(seed)
    draws = []
    for _ in range(n_boot):
        idx = rng.integers(len(curves), size=len(curves))
        draws.append(fit_contraction(curves[idx].mean(axis=0)))
    draws = np.array(draws)
    draws = draws[np.isfinite(draws)]
    alpha = (1 - level) / 2
    lo, hi = np.quantile(draws, [alpha, 1 - alpha]) if len(draws) else (float("nan"),) * 2
    return point, float(lo), float(hi)


@dataclass
class WalkLevel:
    count: int
    mean_next: float


def random_walk_experiment(landscape: FitnessLandscape, p: float, n_cycles: int,
                           seed: int, max_episode: int = 10_000) -> dict[int, WalkLevel]:
    """Per-level mean of d after one oracle mutation.

    Episodes restart from the landscape's start topology whenever d hits 0,
    until ``n_cycles`` transitions have been recorded.
    """
    rng = np.random.default_rng(seed)
    sums: dict[int, list] = {}
    done = 0
    while done < n_cycles:
        graph = landscape.start
        d = landscape.distance(graph)
        for _ in range(max_episode):
            if d == 0 or done >= n_cycles:
                break
            delta = biased_mutation_oracle(graph, landscape, p, rng)
            graph = apply_delta(graph, validate_delta(graph, delta, landscape.budget).delta)
            d_next = landscape.distance(graph)
            acc = sums.setdefault(d, [0, 0])
            acc[0] += 1
            acc[1] += d_next
            d = d_next
            done += 1
    return {lvl: WalkLevel(c, s / c) for lvl, (c, s) in sorted(sums.items())}


def empirical_ceiling_lipschitz(landscape: FitnessLandscape, graphs: Sequence[AgentGraph]) -> float:
    """max |fbar*(T) - fbar*(T')| / d(T, T') over pairs of the given topologies."""
    from .graph import topology_distance

    worst = 0.0
    for a, b in itertools.combinations(graphs, 2):
        dist = topology_distance(a, b, match="role")
        if dist:
            worst = max(worst, abs(fitness_ceiling(a, landscape) - fitness_ceiling(b, landscape)) / dist)
    return worst
