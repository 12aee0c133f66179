"""Fast-loop mathematics on the probability simplex.

Capability weights are projected to role frequencies, and frequencies move
by the exponential-weights replicator step. The continuous replicator flow
is integrated with renormalized forward Euler for the dynamics lab.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

SIMPLEX_TOL = 1e-9


class IndexMismatch(ValueError):
    pass


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SimplexVector:
    ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.shape != (len(self.ids),):
            raise ValueError("ids and values differ in length")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate agent ids")
        if len(self.ids) == 0:
            raise ValueError("empty simplex vector")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("simplex entries must be finite and nonnegative")
        if abs(self.values.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"simplex entries sum to {self.values.sum()!r}, not 1")

    def __getitem__(self, agent_id: str) -> float:
        return float(self.values[self.ids.index(agent_id)])

    def __eq__(self, other):
        if not isinstance(other, SimplexVector):
            return NotImplemented
        return self.ids == other.ids and np.array_equal(self.values, other.values)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.ids, self.values.tolist()))

    @classmethod
    def uniform(cls, ids: Sequence[str]) -> SimplexVector:
        return cls(tuple(ids), np.full(len(ids), 1.0 / len(ids)))

    @classmethod
    def from_dict(cls, d: Mapping[str, float]) -> SimplexVector:
        return cls(tuple(d), np.array(list(d.values()), dtype=float))


@dataclass(frozen=True, eq=False)
class FitnessVector:
    """Per-agent fitness or contribution scores in [0, 1]."""

    ids: tuple[str, ...]
    values: np.ndarray
    noise_bound: float = field(default=0.0)

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.shape != (len(self.ids),):
            raise ValueError("ids and values differ in length")
        if np.any(self.values < 0) or np.any(self.values > 1) or not np.all(np.isfinite(self.values)):
            raise ValueError("fitness entries must lie in [0, 1]")
        if self.noise_bound < 0:
            raise ValueError("noise_bound must be nonnegative")

    def __getitem__(self, agent_id: str) -> float:
        return float(self.values[self.ids.index(agent_id)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.ids, self.values.tolist()))

    @classmethod
    def from_dict(cls, d: Mapping[str, float], noise_bound: float = 0.0) -> FitnessVector:
        return cls(tuple(d), np.array(list(d.values()), dtype=float), noise_bound)


FitnessLike = Union[FitnessVector, Callable[[SimplexVector], FitnessVector]]


def _aligned(pi: SimplexVector, f: FitnessVector) -> np.ndarray:
    if pi.ids == f.ids:
        return f.values
    if set(pi.ids) != set(f.ids) or len(pi.ids) != len(f.ids):
        raise IndexMismatch(f"index sets differ: {sorted(pi.ids)} vs {sorted(f.ids)}")
    pos = {k: i for i, k in enumerate(f.ids)}
    return f.values[[pos[k] for k in pi.ids]]


def to_frequencies(weights: Mapping[str, float]) -> SimplexVector:
    if not weights:
        raise ValueError("weight map is empty")
    w = np.array(list(weights.values()), dtype=float)
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise ValueError("capability weights must be positive and finite")
    return SimplexVector(tuple(weights), w / w.sum())


def replicator_step(pi: SimplexVector, scores: FitnessVector, eta: float) -> SimplexVector:
    """pi'_v = pi_v exp(eta c_v) / sum_u pi_u exp(eta c_u)."""
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    c = _aligned(pi, scores)
    # shifting by the max leaves the ratio unchanged and avoids overflow
    w = pi.values * np.exp(eta * (c - c.max()))
    return SimplexVector(pi.ids, w / w.sum())


def mean_fitness(pi: SimplexVector, f: FitnessVector) -> float:
    return float(np.dot(pi.values, _aligned(pi, f)))


def fitness_variance(pi: SimplexVector, f: FitnessVector) -> float:
    fv = _aligned(pi, f)
    fbar = float(np.dot(pi.values, fv))
    return float(np.dot(pi.values, (fv - fbar) ** 2))


def _evaluate(f: FitnessLike, pi: SimplexVector) -> FitnessVector:
    return f(pi) if callable(f) else f


def integrate_flow(pi0: SimplexVector, f: FitnessLike, dt: float, steps: int) -> list[SimplexVector]:
    """Forward-Euler trajectory of d(pi_v)/dt = pi_v (f_v - fbar), renormalized.

    ``f`` is a fixed fitness vector or a callable of the current state. The
    returned list holds ``steps + 1`` states starting with ``pi0``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if steps < 1:
        raise ValueError("steps must be a positive integer")
    traj = [pi0]
    pi = pi0
    for _ in range(steps):
        fv = _aligned(pi, _evaluate(f, pi))
        # |f_v - fbar| <= max f - min f for every state on the simplex
        if dt * (fv.max() - fv.min()) >= 1:
            raise ValueError("step-size precondition dt * max|f_v - fbar| < 1 violated")
        fbar = float(np.dot(pi.values, fv))
        x = pi.values + dt * pi.values * (fv - fbar)
        x = np.clip(x, 0.0, None)
        pi = SimplexVector(pi.ids, x / x.sum())
        traj.append(pi)
    return traj


def ascent_gap(pi: SimplexVector, pi_next: SimplexVector, f: FitnessVector, eta: float) -> float:
    """fbar(pi') - fbar(pi) - eta * Var_pi(f); at least -O(eta^2) for exact fitness."""
    if set(pi.ids) != set(pi_next.ids):
        raise IndexMismatch("states are over different agents")
    return mean_fitness(pi_next, f) - mean_fitness(pi, f) - eta * fitness_variance(pi, f)


def renormalize_survivors(pi: SimplexVector, survivors: Iterable[str]) -> SimplexVector:
    """Condition the frequency vector on the surviving agents."""
    keep = [k for k in pi.ids if k in set(survivors)]
    vals = np.array([pi[k] for k in keep])
    if vals.sum() <= 0:
        return SimplexVector.uniform(keep)
    return SimplexVector(tuple(keep), vals / vals.sum())


def trajectory_rows(traj: Sequence[SimplexVector]) -> list[tuple[int, str, float]]:
    return [(step, k, float(v)) for step, pi in enumerate(traj) for k, v in zip(pi.ids, pi.values)]


def write_trajectory_csv(path, traj: Sequence[SimplexVector]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "agent_id", "frequency"])
        for row in trajectory_rows(traj):
            w.writerow([row[0], row[1], repr(row[2])])
