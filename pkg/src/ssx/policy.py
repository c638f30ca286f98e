"""Expert policies and the policy-marginalised transition model."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .env import (
    EnvModel,
    MiniPac,
    RewardScheme,
    StateSpace,
    bfs_distances,
    bounce,
    enumerate_reachable,
)


class ConvergenceError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"value iteration did not converge after {iterations} "
                         f"iterations (residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


def softmax(scores: np.ndarray, temperature: float) -> np.ndarray:
    """Row-wise softmax of ``scores / temperature``."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    z = np.asarray(scores, dtype=float) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Policy:
    """A stochastic policy: ``action_distribution(state)`` over ``env.actions``."""

    n_actions: int

    def action_distribution(self, state) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, state) -> np.ndarray:
        return self.action_distribution(state)


class TabularPolicy(Policy):
    def __init__(self, table: dict, n_actions: int):
        self.table = table
        self.n_actions = n_actions

    def action_distribution(self, state) -> np.ndarray:
        try:
            return self.table[state]
        except KeyError:
            raise KeyError(f"no action distribution for state {state!r}") from None

    def to_json(self, env: EnvModel) -> dict:
        return {env.encode(s): [float(p) for p in probs] for s, probs in self.table.items()}

    @classmethod
    def from_json(cls, data: dict, env: EnvModel) -> "TabularPolicy":
        table = {env.decode(k): np.asarray(v, dtype=float) for k, v in data.items()}
        return cls(table, len(env.actions))


@dataclass
class ValueTable:
    states: StateSpace
    values: np.ndarray
    q: np.ndarray
    iterations: int
    residual: float

    def to_json(self, env: EnvModel) -> dict:
        return {
            env.encode(s): {"v": float(self.values[i]), "q": [float(x) for x in self.q[i]]}
            for i, s in enumerate(self.states)
        }


def _tabular_dynamics(env: EnvModel, states: StateSpace):
    """Per-action sparse transition matrices and expected rewards.

    Terminal and boundary states get all-zero rows so their value stays 0.
    """
    n, n_act = len(states), len(env.actions)
    mats, rewards = [], np.zeros((n, n_act))
    for a in range(n_act):
        rows, cols, vals = [], [], []
        for i, s in enumerate(states):
            if states.boundary[i] or env.is_terminal(s):
                continue
            for nxt, p, r in env.step_distribution(s, a):
                j = states.index.get(nxt)
                if j is None:
                    raise IndexError(f"successor {nxt!r} outside the state space")
                rows.append(i)
                cols.append(j)
                vals.append(p)
                rewards[i, a] += p * r
        mats.append(sp.csr_matrix((vals, (rows, cols)), shape=(n, n)))
    return mats, rewards


def value_iteration(env: EnvModel, discount: float = 0.95, tolerance: float = 1e-10,
                    max_iters: int = 10_000, temperature: float = 0.1,
                    states: StateSpace | None = None) -> tuple[ValueTable, TabularPolicy]:
    """Optimal values by value iteration, returned with a softmax-over-Q policy.

    ``states`` defaults to everything reachable from the environment's
    initial state. Boundary states of a local space are treated as
    absorbing with zero value.
    """
    if not 0 < discount < 1:
        raise ValueError("discount must lie in (0, 1)")
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    if states is None:
        states = enumerate_reachable(env)
    mats, rewards = _tabular_dynamics(env, states)
    v = np.zeros(len(states))
    residual = np.inf
    for it in range(1, max_iters + 1):
        q = rewards + discount * np.column_stack([m @ v for m in mats])
        v_new = q.max(axis=1)
        residual = float(np.max(np.abs(v_new - v))) if len(v) else 0.0
        v = v_new
        if residual < tolerance:
            break
    else:
        raise ConvergenceError(residual, max_iters)
    q = rewards + discount * np.column_stack([m @ v for m in mats])
    probs = softmax(q, temperature)
    table = {s: probs[i] for i, s in enumerate(states)}
    return ValueTable(states, v, q, it, residual), TabularPolicy(table, len(env.actions))


class ScriptedMiniPacPolicy(Policy):
    """Hand-written MiniPac expert with softmax action preferences.

    EAT heads for the nearest food, avoids the pill and keeps away from the
    ghost. HUNT heads for the pill while the ghost is dangerous and chases
    the ghost while it is edible.
    """

    def __init__(self, env: MiniPac, scheme: RewardScheme | str | None = None,
                 temperature: float = 0.25, ghost_radius: int = 2,
                 ghost_penalty: float = 5.0, pill_penalty: float = 8.0):
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        self.env = env
        self.scheme = RewardScheme(scheme) if scheme is not None else env.reward_scheme
        self.temperature = temperature
        self.ghost_radius = ghost_radius
        self.ghost_penalty = ghost_penalty
        self.pill_penalty = pill_penalty
        self.n_actions = len(env.actions)
        walls = env.layout.walls
        self._dist = {cell: bfs_distances(walls, cell) for cell in env.layout.open_cells()}

    def _nearest_food(self, cell, mask: int) -> int:
        if not mask:
            return 0
        d = self._dist[cell]
        return min(int(d[c]) for c in self.env.food_cells(mask))

    def scores(self, state) -> np.ndarray:
        env = self.env
        out = np.zeros(self.n_actions)
        if state.status != "live":
            return out
        edible = state.pill_eaten_timer > 1
        for a, name in enumerate(env.actions):
            nxt = bounce(env.layout.walls, state.agent_pos, env._moves[a])
            dg = int(self._dist[nxt][state.ghost_pos])
            danger = max(0, self.ghost_radius + 1 - dg) * self.ghost_penalty
            if self.scheme is RewardScheme.EAT:
                score = -float(self._nearest_food(nxt, state.food_mask))
                score -= danger
                if state.pill_present and nxt == env.layout.pill:
                    score -= self.pill_penalty
            elif edible:
                score = -float(dg)
            elif state.pill_present:
                score = -float(self._dist[nxt][env.layout.pill]) - danger
            else:
                score = -danger
            out[a] = score
        return out

    def action_distribution(self, state) -> np.ndarray:
        return softmax(self.scores(state), self.temperature)


def scripted_minipac_policy(env: MiniPac, scheme: RewardScheme | str | None = None,
                            temperature: float = 0.25, **kw) -> ScriptedMiniPacPolicy:
    return ScriptedMiniPacPolicy(env, scheme, temperature, **kw)


def rollout(env: EnvModel, policy: Policy, start, steps: int,
            rng: np.random.Generator) -> tuple[list, float]:
    """Sample one trajectory; returns visited states and total reward."""
    state, total = start, 0.0
    path = [state]
    for _ in range(steps):
        if env.is_terminal(state):
            break
        probs = policy.action_distribution(state)
        a = int(rng.choice(len(probs), p=probs))
        outcomes = env.step_distribution(state, a)
        k = int(rng.choice(len(outcomes), p=[p for _, p, _ in outcomes]))
        state, _, r = outcomes[k]
        total += r
        path.append(state)
    return path, total


@dataclass
class TransitionModel:
    """One-step state-to-state likelihoods f(s, s') under a fixed policy.

    ``matrix`` is a CSR matrix indexed by positions in ``states``.
    """

    states: StateSpace
    matrix: sp.csr_matrix

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def likelihood(self, i: int, j: int) -> float:
        return float(self.matrix[i, j])

    def support(self, i: int) -> list[tuple[int, float]]:
        row = self.matrix.getrow(i)
        return sorted(zip(row.indices.tolist(), row.data.tolist()))

    def content_hash(self) -> str:
        m = self.matrix.tocsr()
        m.sort_indices()
        h = hashlib.sha256()
        h.update(np.asarray(m.shape, dtype=np.int64).tobytes())
        h.update(m.indptr.astype(np.int64).tobytes())
        h.update(m.indices.astype(np.int64).tobytes())
        h.update(m.data.astype(np.float64).tobytes())
        return h.hexdigest()

    @classmethod
    def from_dense(cls, matrix: np.ndarray, states: StateSpace | None = None) -> "TransitionModel":
        matrix = np.asarray(matrix, dtype=float)
        if states is None:
            states = StateSpace(list(range(matrix.shape[0])))
        return cls(states, sp.csr_matrix(matrix))


def induce_transition_model(env: EnvModel, policy: Policy, states: StateSpace,
                            drop_below: float = 0.0) -> TransitionModel:
    """Marginalise the policy's action distribution through the dynamics.

    f(s, s') = sum_a pi(a|s) P(s'|s, a). Terminal and boundary states are
    absorbing. Successors outside ``states`` are an error unless their
    total likelihood is at most ``drop_below``, in which case they are
    left out.
    """
    n = len(states)
    rows, cols, vals = [], [], []
    for i, s in enumerate(states):
        if states.boundary[i] or env.is_terminal(s):
            rows.append(i)
            cols.append(i)
            vals.append(1.0)
            continue
        probs = policy.action_distribution(s)
        acc: dict[int, float] = {}
        missing: dict = {}
        for a, pa in enumerate(probs):
            if pa <= 0:
                continue
            for nxt, p, _ in env.step_distribution(s, a):
                j = states.index.get(nxt)
                if j is None:
                    missing[nxt] = missing.get(nxt, 0.0) + pa * p
                else:
                    acc[j] = acc.get(j, 0.0) + pa * p
        for nxt, mass in missing.items():
            if mass > drop_below:
                raise IndexError(f"successor {nxt!r} of state {i} is outside the state space")
        for j in sorted(acc):
            rows.append(i)
            cols.append(j)
            vals.append(acc[j])
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return TransitionModel(states, mat)


def save_policy(path: str | Path, policy: TabularPolicy, env: EnvModel,
                values: ValueTable | None = None) -> None:
    doc = {"actions": list(env.actions), "policy": policy.to_json(env)}
    if values is not None:
        doc["values"] = values.to_json(env)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def load_policy(path: str | Path, env: EnvModel) -> TabularPolicy:
    doc = json.loads(Path(path).read_text())
    if list(doc["actions"]) != list(env.actions):
        raise ValueError("action list in policy file does not match the environment")
    return TabularPolicy.from_json(doc["policy"], env)
