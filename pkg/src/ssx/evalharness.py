"""Stability and scaling studies for explanations.

Every study takes explicit roots and seeds and returns plain tables, so
results are reproducible and can be written out with ``write_csv``.
Strategic states from two runs are matched by taking the priority state
of the meta-state that contains the root.
"""

from __future__ import annotations

import csv
import timeit
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.stats

from .env import EnvModel, MiniPac, PacState
from .metastates import cluster_meta_states, partition_objective, spectral_embed
from .pathgraph import PathMatrix, local_approximation, out_path_counts
from .pipeline import SSXParams, SSXResult, explain_local, minipac_params
from .policy import Policy, rollout

ENTITIES = ("agent", "ghost", "food")


def _map(fn: Callable, items: Sequence, workers: int = 1) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _explain(env, policy, root, params: SSXParams) -> SSXResult:
    # degenerate meta-states are expected near absorbing boundaries
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return explain_local(env, policy, root, params)


def root_priority_state(result: SSXResult):
    idx = result.root_priority()
    return result.states[idx] if idx is not None else result.states[0]


def entity_distances(env: EnvModel, a, b) -> dict[str, float]:
    """Euclidean distances between two states, per entity.

    Food distance compares the binary food indicator matrices.
    """
    out = {"agent": float(np.hypot(*np.subtract(a.agent_pos, b.agent_pos)))}
    if isinstance(a, PacState):
        out["ghost"] = float(np.hypot(*np.subtract(a.ghost_pos, b.ghost_pos)))
        fa = env.food_matrix(a.food_mask).astype(float)
        fb = env.food_matrix(b.food_mask).astype(float)
        out["food"] = float(np.linalg.norm(fa - fb))
    return out


# -- out-path sampling ----------------------------------------------------

@dataclass
class SamplingRow:
    fraction: float
    seed: int
    displacement: float
    count_time: float
    exact_time: float

    @property
    def time_ratio(self) -> float:
        return self.count_time / self.exact_time if self.exact_time > 0 else float("nan")


def _time_counts(pm: PathMatrix, assignment, k, fraction, seed, weighted, repeats) -> float:
    """Best-of-``repeats`` mean time of one out-path count computation."""
    a = np.asarray(assignment, dtype=np.int64)
    timer = timeit.Timer(lambda: out_path_counts(pm, a, k, fraction, seed, weighted))
    # single calls can take microseconds, so batch them to about 20 ms
    number = max(1, int(0.02 / max(timer.timeit(1), 1e-7)))
    return min(timer.repeat(repeats, number)) / number


def sampling_study(env: EnvModel, policy: Policy, roots: Sequence, fractions: Sequence[float],
                   seeds: Sequence[int] = (0,), params: SSXParams | None = None,
                   repeats: int = 5, workers: int = 1) -> list[SamplingRow]:
    """Agent displacement and C-computation time under sampled out-path counts.

    For every root the exact run is compared with a run whose counts use
    only ``fraction`` of the targets. Times are the best of ``repeats``
    calls on the exact run's partition, so both sides do identical work
    apart from the sampling.
    """
    if any(not 0 < f <= 1 for f in fractions):
        raise ValueError("fractions must lie in (0, 1]")
    params = params or minipac_params()

    def per_root(root):
        exact = _explain(env, policy, root, replace(params, sample_fraction=1.0))
        ref = root_priority_state(exact)
        a, k = exact.partition.assignment, exact.partition.k
        w = params.weighted_counts
        t_exact = _time_counts(exact.paths, a, k, 1.0, 0, w, repeats)
        rows = []
        for f in fractions:
            for seed in seeds:
                if f == 1.0:
                    disp, t = 0.0, t_exact
                else:
                    run = _explain(env, policy, root, replace(params, sample_fraction=f, seed=seed))
                    disp = entity_distances(env, ref, root_priority_state(run))["agent"]
                    t = _time_counts(exact.paths, a, k, f, seed, w, repeats)
                rows.append((f, seed, disp, t, t_exact))
        return rows

    per = _map(per_root, list(roots), workers)
    out = []
    for f in fractions:
        for seed in seeds:
            hits = [r for rows in per for r in rows if r[0] == f and r[1] == seed]
            out.append(SamplingRow(f, seed, float(np.mean([h[2] for h in hits])),
                                   float(np.sum([h[3] for h in hits])),
                                   float(np.sum([h[4] for h in hits]))))
    return out


def trajectory_roots(env: EnvModel, policy: Policy, n: int, seed: int = 0, stride: int = 2,
                     max_steps: int = 200) -> list:
    """Live boards visited by the policy, taken every ``stride`` steps.

    Episodes start from ``env.initial_state()``; a new seeded episode begins
    whenever one ends before ``n`` boards are collected.
    """
    if n < 1 or stride < 1:
        raise ValueError("n and stride must be positive")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(1000):
        path, _ = rollout(env, policy, env.initial_state(), max_steps, rng)
        for s in path[::stride]:
            if not env.is_terminal(s) and s not in out:
                out.append(s)
                if len(out) == n:
                    return out
    raise ValueError(f"policy visited fewer than {n} distinct live boards")


# -- horizon faithfulness -------------------------------------------------

@dataclass
class HorizonTable:
    horizons: list[int]
    tables: dict[str, np.ndarray]

    def spearman(self, entity: str = "agent") -> float:
        """Rank correlation of distance with horizon gap over off-diagonal cells."""
        n = len(self.horizons)
        iu = np.triu_indices(n, 1)
        gap = np.abs(np.subtract.outer(self.horizons, self.horizons))[iu]
        rho = scipy.stats.spearmanr(gap, self.tables[entity][iu]).statistic
        return float(rho)

    def mean(self, entity: str) -> float:
        n = len(self.horizons)
        iu = np.triu_indices(n, 1)
        return float(self.tables[entity][iu].mean())


def horizon_faithfulness(env: MiniPac, policy: Policy, roots: Sequence, N_values: Sequence[int],
                         params: SSXParams | None = None, workers: int = 1) -> HorizonTable:
    """Mean pairwise distances between root-priority states across horizons."""
    N_values = [int(n) for n in N_values]
    if list(N_values) != sorted(N_values) or len(set(N_values)) != len(N_values):
        raise ValueError("N_values must be strictly ascending")
    params = params or minipac_params()

    def per_root(root):
        return [root_priority_state(_explain(env, policy, root, replace(params, horizon=n)))
                for n in N_values]

    picks = _map(per_root, list(roots), workers)
    m = len(N_values)
    tables = {e: np.zeros((m, m)) for e in ENTITIES}
    for row in picks:
        for i in range(m):
            for j in range(m):
                d = entity_distances(env, row[i], row[j])
                for e in ENTITIES:
                    tables[e][i, j] += d[e]
    for e in ENTITIES:
        tables[e] /= max(len(picks), 1)
    return HorizonTable(N_values, tables)


# -- perturbation stability -----------------------------------------------

@dataclass
class StabilityReport:
    """Mean distances between matched strategic states, keyed by (entity, condition)."""

    rows: dict[tuple[str, str], float]
    trials: int
    seed: int
    raw: dict[tuple[str, str], list[float]] = field(default_factory=dict, repr=False)

    def get(self, entity: str, condition: str) -> float:
        return self.rows[(entity, condition)]


def remove_food(env: MiniPac, state: PacState, n: int, rng: np.random.Generator) -> PacState:
    cells = env.food_cells(state.food_mask)
    if n > len(cells):
        raise ValueError(f"cannot remove {n} food pieces, only {len(cells)} left")
    mask = state.food_mask
    for i in rng.choice(len(cells), size=n, replace=False):
        mask &= ~env.cell_bit(cells[int(i)])
    return state._replace(food_mask=mask)


def perturbation_stability(env: MiniPac, policy: Policy, roots: Sequence,
                           n_perturbations: int = 10, n_food_removed: int = 3, seed: int = 0,
                           params: SSXParams | None = None, workers: int = 1) -> StabilityReport:
    """Compare root-priority states of each root and of food-removed copies of it."""
    params = params or minipac_params()
    rng = np.random.default_rng(seed)
    condition = f"food_removed={n_food_removed}"
    jobs = []
    for root in roots:
        if len(env.food_cells(root.food_mask)) <= n_food_removed:
            raise ValueError("root has too little food for this perturbation")
        jobs.append((root, [remove_food(env, root, n_food_removed, rng)
                            for _ in range(n_perturbations)]))

    def per_root(job):
        root, variants = job
        ref = root_priority_state(_explain(env, policy, root, params))
        out = []
        for v in variants:
            pick = ref if v == root else root_priority_state(_explain(env, policy, v, params))
            out.append(entity_distances(env, ref, pick))
        return out

    raw = {(e, condition): [] for e in ENTITIES}
    for res in _map(per_root, jobs, workers):
        for d in res:
            for e in ENTITIES:
                raw[(e, condition)].append(d[e])
    rows = {key: float(np.mean(v)) if v else 0.0 for key, v in raw.items()}
    return StabilityReport(rows, n_perturbations * len(jobs), seed, raw)


# -- state-space growth ---------------------------------------------------

def growth_study(env: EnvModel, roots: Sequence, N_max: int) -> list[tuple[int, float]]:
    """Mean number of unique local states within N moves, for N = 1..N_max.

    One breadth-first expansion to ``N_max`` per root suffices: the local
    space for a smaller N is the set of states at depth at most N.
    """
    if N_max < 1:
        raise ValueError("N_max must be at least 1")
    totals = np.zeros(N_max + 1)
    for root in roots:
        depth = local_approximation(env, root, N_max).depth
        totals += np.cumsum(np.bincount(depth, minlength=N_max + 1))
    means = totals / max(len(roots), 1)
    return [(n, float(means[n])) for n in range(1, N_max + 1)]


# -- choosing k ------------------------------------------------------------

def k_sweep(pm: PathMatrix, emb_inputs, k_values: Sequence[int], eta: float = 1.0,
            seeds: Sequence[int] = (0,), restarts: int = 5,
            weighted_counts: bool = True) -> list[tuple[int, float, float]]:
    """Final clustering objective per k, best over seeds.

    ``emb_inputs`` is either a fixed coordinate array shared by every k or
    ``None`` to embed with k eigenvectors for each k. Rows are
    ``(k, objective, distance term)``.
    """
    k_values = [int(k) for k in k_values]
    if k_values != sorted(k_values):
        raise ValueError("k_values must be ascending")
    rows = []
    for k in k_values:
        coords = (spectral_embed(pm, k).coords if emb_inputs is None
                  else np.asarray(getattr(emb_inputs, "coords", emb_inputs), float))
        best = None
        for s in seeds:
            part = cluster_meta_states(coords, pm, k, eta, seed=s, restarts=restarts,
                                       weighted_counts=weighted_counts)
            if best is None or part.objective < best.objective:
                best = part
        dist = partition_objective(coords, pm, best.assignment, 0.0, k)
        rows.append((k, float(best.objective), float(dist)))
    return rows


# -- output ----------------------------------------------------------------

def write_csv(path: str | Path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{x:.6g}" if isinstance(x, float) else x for x in row])
    return path
