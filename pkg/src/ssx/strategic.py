"""Strategic-state selection and the Q-value importance baseline."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .metastates import MetaStatePartition
from .pathgraph import PathMatrix, own_counts


def pair_penalty(likelihood: np.ndarray, a: int, b: int) -> float:
    return float(max(likelihood[a, b], likelihood[b, a]))


def strategic_objective(candidates: Sequence[int], counts: np.ndarray,
                        likelihood: np.ndarray, lam: float) -> float:
    """Out-path coverage of a candidate set minus ``lam`` times pairwise closeness.

    ``counts[s]`` is C(s, meta-state) and closeness of two states is the
    larger of their two path likelihoods.
    """
    cand = list(candidates)
    total = float(sum(counts[s] for s in cand))
    for i in range(len(cand)):
        for j in range(i + 1, len(cand)):
            total -= lam * pair_penalty(likelihood, cand[i], cand[j])
    return total


def marginal_gain(current: Sequence[int], candidate: int, counts: np.ndarray,
                  likelihood: np.ndarray, lam: float) -> float:
    cur = np.asarray(list(current), dtype=np.int64)
    pen = np.maximum(likelihood[candidate, cur], likelihood[cur, candidate]).sum() if len(cur) else 0.0
    return float(counts[candidate] - lam * pen)


@dataclass
class StrategicSet:
    meta_state: int
    states: list[int]
    gains: list[float]
    lam: float
    degenerate: bool = False

    @property
    def priority(self) -> int | None:
        return self.states[0] if self.states else None

    def to_json(self) -> dict:
        return {
            "meta_state": self.meta_state,
            "states": [int(s) for s in self.states],
            "gains": [float(g) for g in self.gains],
            "degenerate": self.degenerate,
        }


@dataclass
class Explanation:
    partition: MetaStatePartition
    strategic: list[StrategicSet]
    goal_meta_state: int | None
    config: dict = field(default_factory=dict)

    def priority_states(self) -> list[int]:
        return [s.priority for s in self.strategic if s.priority is not None]

    def meta_state_of(self, state: int) -> int:
        return int(self.partition.assignment[state])


def select_strategic(members: Sequence[int], counts: np.ndarray, likelihood: np.ndarray,
                     lam: float, eps_g: float = 0.1, min_gain_ratio: float = 0.1,
                     max_states: int | None = None, meta_state: int = 0) -> StrategicSet:
    """Greedy selection of strategic states inside one meta-state.

    The first pick is always taken. Later picks are taken only while the
    marginal gain is at least ``eps_g`` and at least ``min_gain_ratio``
    times the objective reached so far. Ties go to the larger count, then
    the lower state index.
    """
    members = np.asarray(sorted(int(m) for m in members), dtype=np.int64)
    cap = len(members) if max_states is None else min(max_states, len(members))
    c = np.asarray(counts, dtype=float)[members]
    penalty = np.zeros(len(members))
    free = np.ones(len(members), dtype=bool)
    chosen, gains = [], []
    value = 0.0
    while len(chosen) < cap:
        gain = np.where(free, c - lam * penalty, -np.inf)
        top = gain.max()
        # lexsort: last key is primary
        ties = np.flatnonzero(gain == top)
        pick = ties[np.lexsort((members[ties], -c[ties]))[0]]
        g = float(gain[pick])
        if chosen and (g < eps_g or g < min_gain_ratio * abs(value)):
            break
        chosen.append(int(members[pick]))
        gains.append(g)
        value += g
        free[pick] = False
        s = members[pick]
        penalty += np.maximum(likelihood[members, s], likelihood[s, members])
    degenerate = bool(len(members) and c.max() <= 0)
    return StrategicSet(meta_state, chosen, gains, lam, degenerate)


def find_goal(goal_mask: np.ndarray, pm: PathMatrix) -> int | None:
    """The goal state with the largest incoming path likelihood, if any."""
    goals = np.flatnonzero(goal_mask)
    if len(goals) == 0:
        return None
    mass = pm.likelihood[:, goals].sum(axis=0)
    return int(goals[np.argmax(mass)])


def greedy_strategic(partition: MetaStatePartition, counts: np.ndarray, pm: PathMatrix,
                     lam: float, eps_g: float = 0.1, min_gain_ratio: float = 0.1,
                     goal: int | None = None, max_per_meta: int | None = None,
                     config: dict | None = None) -> Explanation:
    """Strategic states for every meta-state.

    ``counts`` is the ``(n, k)`` out-path table for ``partition``. The
    meta-state holding ``goal`` is explained by the goal alone.
    """
    if eps_g <= 0:
        raise ValueError("eps_g must be positive")
    if not 0 <= min_gain_ratio < 1:
        raise ValueError("min_gain_ratio must lie in [0, 1)")
    own = own_counts(counts, partition.assignment)
    lik = pm.likelihood
    goal_meta = partition.meta_state_of(goal) if goal is not None else None
    sets = []
    for m in range(partition.k):
        if m == goal_meta:
            sets.append(StrategicSet(m, [goal], [float(own[goal])], lam))
            continue
        members = partition.members(m)
        chosen = select_strategic(members, own, lik, lam, eps_g, min_gain_ratio,
                                  max_per_meta, meta_state=m)
        if chosen.degenerate:
            warnings.warn(f"meta-state {m} has no out-paths; picked state {chosen.priority}",
                          RuntimeWarning, stacklevel=2)
        sets.append(chosen)
    return Explanation(partition, sets, goal_meta, dict(config or {}))


def importance_scores(q_table) -> np.ndarray:
    """Spread of action values per state: max_a Q(s, a) - min_a Q(s, a)."""
    q = np.asarray(q_table, dtype=float)
    if q.ndim != 2:
        raise ValueError("q_table must be a (states, actions) array")
    if np.isnan(q).any():
        missing = np.argwhere(np.isnan(q))[0]
        raise KeyError(f"missing Q value for state {missing[0]}, action {missing[1]}")
    return q.max(axis=1) - q.min(axis=1)
