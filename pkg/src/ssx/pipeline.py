"""End-to-end explanation: states -> transition model -> paths -> meta-states -> strategic states."""

from __future__ import annotations

import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order

from .env import EnvModel, StateSpace
from .metastates import MetaStatePartition, SpectralEmbedding, cluster_meta_states, spectral_embed
from .pathgraph import (
    MIN_LIKELIHOOD,
    LocalStateSpace,
    PathMatrix,
    cached_gamma,
    local_approximation,
    out_path_counts,
)
from .policy import Policy, TransitionModel, induce_transition_model
from .strategic import Explanation, find_goal, greedy_strategic


@dataclass
class SSXParams:
    k: int = 4
    eta: float = 1.0
    eps_phi: float | None = None
    restarts: int = 5
    lam: float = 50.0
    eps_g: float = 0.1
    min_gain_ratio: float = 0.1
    max_strategic_per_meta: int | None = 2
    horizon: int | None = None
    sample_fraction: float = 1.0
    seed: int = 0
    normalize_counts: bool = True
    weighted_counts: bool = True

    def validate(self) -> None:
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if self.eps_phi is not None and self.eps_phi <= 0:
            raise ValueError("eps_phi must be positive")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.eps_g <= 0:
            raise ValueError("eps_g must be positive")
        if not 0 <= self.min_gain_ratio < 1:
            raise ValueError("min_gain_ratio must lie in [0, 1)")
        if self.max_strategic_per_meta is not None and self.max_strategic_per_meta < 1:
            raise ValueError("max_strategic_per_meta must be at least 1")
        if self.horizon is not None and self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if not 0 < self.sample_fraction <= 1:
            raise ValueError("sample_fraction must lie in (0, 1]")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")


@dataclass
class SSXResult:
    states: StateSpace
    model: TransitionModel
    paths: PathMatrix
    embedding: SpectralEmbedding
    partition: MetaStatePartition
    counts: np.ndarray
    explanation: Explanation
    timings: dict = field(default_factory=dict)

    def root_priority(self) -> int | None:
        """Priority strategic state of the meta-state containing state 0 (the root)."""
        m = self.explanation.meta_state_of(0)
        return self.explanation.strategic[m].priority


def run_ssx(env: EnvModel, policy: Policy, states: StateSpace, params: SSXParams,
            cache_dir: str | None = None) -> SSXResult:
    params.validate()
    timings = {}
    t0 = time.perf_counter()
    model = induce_transition_model(env, policy, states, drop_below=MIN_LIKELIHOOD)
    t1 = time.perf_counter()
    pm = cached_gamma(model, cache_dir)
    t2 = time.perf_counter()
    k = min(params.k, len(states))
    if k < params.k:
        warnings.warn(f"only {len(states)} states; using k={k}", RuntimeWarning, stacklevel=2)
    emb = spectral_embed(pm, k)
    part = cluster_meta_states(emb, pm, k, params.eta, params.eps_phi, params.seed,
                               params.restarts, params.sample_fraction,
                               params.normalize_counts, params.weighted_counts)
    t3 = time.perf_counter()
    counts = out_path_counts(pm, part.assignment, k, params.sample_fraction, params.seed,
                             weighted=params.weighted_counts)
    t4 = time.perf_counter()
    goal_mask = np.array([env.goal_predicate(s) for s in states], dtype=bool)
    goal = find_goal(goal_mask, pm)
    expl = greedy_strategic(part, counts, pm, params.lam, params.eps_g, params.min_gain_ratio,
                            goal, params.max_strategic_per_meta, config=asdict(params))
    t5 = time.perf_counter()
    timings.update(model=t1 - t0, gamma=t2 - t1, metastates=t3 - t2, counts=t4 - t3,
                   strategic=t5 - t4)
    return SSXResult(states, model, pm, emb, part, counts, expl, timings)


def explain_local(env: EnvModel, policy: Policy, root, params: SSXParams,
                  cache_dir: str | None = None) -> SSXResult:
    """Explain the neighbourhood of ``root`` within ``params.horizon`` moves."""
    if params.horizon is None:
        raise ValueError("a local explanation needs params.horizon")
    states = local_approximation(env, root, params.horizon)
    return run_ssx(env, policy, policy_reachable(env, policy, states), params, cache_dir)


def policy_reachable(env: EnvModel, policy: Policy, states: LocalStateSpace) -> LocalStateSpace:
    """Drop local states the policy cannot reach from the root.

    States whose best path from the root is below the likelihood floor
    would otherwise be isolated in the affinity graph and each soak up a
    zero eigenvalue of the embedding.
    """
    model = induce_transition_model(env, policy, states)
    m = sp.coo_matrix(model.matrix)
    keep = m.data > MIN_LIKELIHOOD
    graph = sp.csr_matrix((np.ones(keep.sum()), (m.row[keep], m.col[keep])), shape=m.shape)
    seen = breadth_first_order(graph, 0, directed=True, return_predecessors=False)
    if len(seen) == len(states):
        return states
    idx = np.sort(seen)
    return LocalStateSpace([states[i] for i in idx], states.boundary[idx], root=states.root,
                           horizon=states.horizon, depth=states.depth[idx])


def four_rooms_params(**overrides) -> SSXParams:
    """Defaults for the 11x11 Four Rooms explanation."""
    return SSXParams(**{**dict(k=4, eta=1.0, lam=50.0, eps_g=0.1), **overrides})


def minipac_params(**overrides) -> SSXParams:
    """Defaults for local MiniPac explanations (horizon 6)."""
    return SSXParams(**{**dict(k=4, eta=1.0, lam=0.1, eps_g=0.1, horizon=6), **overrides})
