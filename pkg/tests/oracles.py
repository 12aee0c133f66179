"""Independent reference computations used to derive expected test values.

Each helper recomputes a quantity from its definition with plain Python
(no numpy, no package code) so tests do not check the code against itself.
"""

import itertools
import math


def replicator_ref(pi, c, eta):
    w = [p * math.exp(eta * x) for p, x in zip(pi, c)]
    z = sum(w)
    return [x / z for x in w]


def mean_ref(pi, f):
    return sum(p * x for p, x in zip(pi, f))


def var_ref(pi, f):
    m = mean_ref(pi, f)
    return sum(p * (x - m) ** 2 for p, x in zip(pi, f))


def logistic_ref(p0, t):
    """Exact solution of the two-strategy flow with f = (1, 0)."""
    return p0 * math.exp(t) / (p0 * math.exp(t) + (1 - p0))


def lex_min_topological_order(nodes, edges, sink):
    """Enumerate every permutation, keep topological ones with the sink last."""
    best = None
    for perm in itertools.permutations(sorted(nodes)):
        if perm[-1] != sink:
            continue
        pos = {v: i for i, v in enumerate(perm)}
        if all(pos[u] < pos[v] for u, v in edges):
            if best is None or list(perm) < best:
                best = list(perm)
    return best


def symdiff_distance(nodes1, edges1, nodes2, edges2):
    """|V1 ^ V2| + |E1 ^ E2| over hashable node labels (sets, not multisets)."""
    return len(set(nodes1) ^ set(nodes2)) + len(set(edges1) ^ set(edges2))


def algorithm_schedule(scores, R, K, tau, stop_at_slow=None):
    """Hand trace of the two-timescale loop: (rounds run, slow-update rounds, reason).

    ``scores[t]`` is the answer score of round t; ``stop_at_slow`` is the
    1-based index of the slow update whose decision says stop.
    """
    slow_rounds = []
    t = 0
    while True:
        s = scores[min(t, len(scores) - 1)]
        reason = None
        if (t + 1) % K == 0 and s < tau:
            slow_rounds.append(t)
            if stop_at_slow is not None and len(slow_rounds) == stop_at_slow:
                reason = "stop_signal"
        t += 1
        if s >= tau:
            return t, slow_rounds, "threshold"
        if reason:
            return t, slow_rounds, reason
        if t >= R:
            return t, slow_rounds, "budget_exhausted"


def grid_max_2d(fn, step):
    """Brute-force maximum of fn(x) over x in [0, 1] at the given step."""
    n = round(1 / step)
    return max(fn(i / n) for i in range(n + 1))
