"""Maximum-likelihood path structure of a policy-induced state graph.

An edge ``s -> s'`` has weight ``-log f(s, s')``, so shortest paths are the
most likely paths under the expert policy. ``build_gamma`` returns the
all-pairs costs, the path likelihoods ``exp(-cost)`` and a predecessor
matrix from which every optimal path can be replayed.
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from numba import njit
from scipy.sparse.csgraph import dijkstra

from .env import EnvModel, StateSpace
from .policy import TransitionModel

MIN_LIKELIHOOD = 1e-12
CACHE_MAGIC = b"SSXPM\x00\x01\x00"


class InvalidModel(ValueError):
    pass


class NoPath(LookupError):
    pass


@dataclass
class LocalStateSpace(StateSpace):
    root: object = None
    horizon: int = 0
    depth: np.ndarray | None = field(default=None, repr=False)


def local_approximation(env: EnvModel, root, N: int,
                        actions: Sequence[int] | None = None) -> LocalStateSpace:
    """Unique states within ``N`` composite moves of ``root``.

    Expansion is breadth-first over the given agent actions (all by default)
    and every positive-probability environment response; duplicates are
    dropped before the next depth is expanded. States at depth ``N`` with
    successors outside the set are flagged as boundary states.
    """
    if N < 0:
        raise ValueError("horizon must be non-negative")
    acts = range(len(env.actions)) if actions is None else list(actions)

    def succ(state):
        out: dict = {}
        for a in acts:
            for nxt, p, _ in env.step_distribution(state, a):
                if p > 0:
                    out.setdefault(nxt)
        return out

    order = [root]
    depth = {root: 0}
    layer = [root]
    for d in range(1, N + 1):
        nxt_layer = []
        for state in layer:
            for nxt in succ(state):
                if nxt not in depth:
                    depth[nxt] = d
                    order.append(nxt)
                    nxt_layer.append(nxt)
        layer = nxt_layer
    boundary = np.zeros(len(order), dtype=bool)
    for i, state in enumerate(order):
        if depth[state] == N and not env.is_terminal(state):
            boundary[i] = any(nxt not in depth for nxt in succ(state))
    return LocalStateSpace(order, boundary, root=root, horizon=N,
                           depth=np.array([depth[s] for s in order], dtype=np.int64))


@dataclass
class PathMatrix:
    """All-pairs maximum-likelihood path record.

    ``cost[i, j]`` is the summed ``-log f`` along the best path (inf when
    unreachable), ``likelihood = exp(-cost)`` and ``pred[i, j]`` is the
    state preceding ``j`` on the best path from ``i`` (-1 on the diagonal
    and for unreachable pairs).
    """

    cost: np.ndarray
    pred: np.ndarray
    hops: np.ndarray | None = None

    @property
    def likelihood(self) -> np.ndarray:
        return np.exp(-self.cost)

    def __len__(self) -> int:
        return self.cost.shape[0]

    @cached_property
    def cost_by_target(self) -> np.ndarray:
        """``cost.T`` stored contiguously, so a subset of targets is a row gather."""
        return np.ascontiguousarray(self.cost.T)

    @cached_property
    def pred_int32(self) -> np.ndarray:
        return np.ascontiguousarray(self.pred, dtype=np.int32)


def _edge_list(model: TransitionModel):
    m = sp.coo_matrix(model.matrix)
    if m.nnz and (m.data.min() < 0 or m.data.max() > 1 + 1e-9):
        raise InvalidModel("transition likelihoods must lie in [0, 1]")
    keep = (m.row != m.col) & (m.data > MIN_LIKELIHOOD)
    u, v, f = m.row[keep], m.col[keep], np.minimum(m.data[keep], 1.0)
    w = -np.log(f)
    order = np.lexsort((u, v))
    return u[order].astype(np.int64), v[order].astype(np.int64), w[order]


def build_gamma(model: TransitionModel) -> PathMatrix:
    """All-pairs most-likely paths with deterministic predecessors.

    Among equally likely paths the predecessor of ``j`` is the one giving
    the fewest hops, then the lowest state index.
    """
    n = len(model)
    u, v, w = _edge_list(model)
    graph = sp.csr_matrix((w, (u, v)), shape=(n, n))
    cost = dijkstra(graph, directed=True)
    pred = np.full((n, n), -1, dtype=np.int32)
    hops = np.full((n, n), -1, dtype=np.int64)
    np.fill_diagonal(hops, 0)
    if len(u) == 0:
        return PathMatrix(cost, pred, hops)

    # edges are sorted by head v, so each head's in-edges form one segment
    heads, starts = np.unique(v, return_index=True)
    with np.errstate(invalid="ignore"):
        via = cost[:, u] + w
        tol = 1e-11 * (1.0 + np.abs(cost[:, v]))
        tight = np.isfinite(via) & (via <= cost[:, v] + tol)

    inf = np.iinfo(np.int64).max // 4
    h = np.full((n, n), inf, dtype=np.int64)
    np.fill_diagonal(h, 0)
    for _ in range(n):
        cand = np.where(tight, h[:, u] + 1, inf)
        best = np.minimum.reduceat(cand, starts, axis=1)
        new = h.copy()
        new[:, heads] = np.minimum(h[:, heads], best)
        if np.array_equal(new, h):
            break
        h = new
    ok = tight & (h[:, u] == h[:, v] - 1)
    choice = np.minimum.reduceat(np.where(ok, u, inf), starts, axis=1)
    found = choice < inf
    rows, cols = np.nonzero(found)
    pred[rows, heads[cols]] = choice[rows, cols]
    np.fill_diagonal(pred, -1)
    reach = h < inf
    hops[reach] = h[reach]
    return PathMatrix(cost, pred, hops)


def path_nodes(pm: PathMatrix, source: int, target: int) -> list[int]:
    """States on the best path from ``source`` to ``target``, endpoints included."""
    if source == target:
        return [source]
    if not np.isfinite(pm.cost[source, target]):
        raise NoPath(f"no path from {source} to {target}")
    nodes = [target]
    cur = target
    for _ in range(len(pm)):
        cur = int(pm.pred[source, cur])
        if cur < 0:
            raise NoPath(f"broken predecessor chain from {source} to {target}")
        nodes.append(cur)
        if cur == source:
            return nodes[::-1]
    raise NoPath(f"predecessor cycle between {source} and {target}")


def path_cost(model_matrix, nodes: Sequence[int]) -> float:
    """Summed ``-log f`` along an explicit node sequence."""
    m = sp.csr_matrix(model_matrix)
    return float(sum(-np.log(m[a, b]) for a, b in zip(nodes[:-1], nodes[1:])))


@njit(cache=True)
def _sample_targets(n, m, seed):
    # partial Fisher-Yates driven by splitmix64; cheap to seed, unlike MT19937
    idx = np.arange(n)
    state = np.uint64(seed)
    for i in range(m):
        state += np.uint64(0x9E3779B97F4A7C15)
        z = state
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
        j = i + np.int64(z % np.uint64(n - i))
        idx[i], idx[j] = idx[j], idx[i]
    return np.sort(idx[:m])


@njit(cache=True)
def _count_kernel(pred, cost_t, a, k, m, seed, weighted):
    # walk each best path backwards from its target, crediting interior states
    n = pred.shape[0]
    for s in range(n):
        if a[s] < 0 or a[s] >= k:
            raise ValueError("meta-state labels must lie in [0, k)")
    if m < n:
        targets = _sample_targets(n, m, seed)
    else:
        targets = np.arange(n)
    scale = n / m
    out = np.zeros(n * k)
    for ti in range(targets.shape[0]):
        t = targets[ti]
        row = cost_t[t]
        for s in range(n):
            if a[s] == a[t] or row[s] == np.inf:
                continue
            w = scale * np.exp(-row[s]) if weighted else scale
            slot = a[s]
            cur = pred[s, t]
            while cur != s and cur >= 0:
                out[cur * k + slot] += w
                cur = pred[s, cur]
    return out


def sample_targets(n: int, sample_fraction: float, seed: int) -> np.ndarray:
    """Seeded uniform sample of ``round(sample_fraction * n)`` target states, sorted."""
    return _sample_targets(n, _sample_size(n, sample_fraction), seed % 2**32)


def _sample_size(n: int, sample_fraction: float) -> int:
    return n if sample_fraction >= 1 else max(1, int(round(sample_fraction * n)))


def out_path_counts(pm: PathMatrix, assignment: Sequence[int], k: int | None = None,
                    sample_fraction: float = 1.0, seed: int = 0,
                    weighted: bool = False) -> np.ndarray:
    """Count of best paths leaving each meta-state that pass through each state.

    Returns an ``(n, k)`` table. For a state ``s`` inside meta-state ``m``
    the entry ``[s, m]`` counts pairs (source in ``m`` other than ``s``,
    target outside ``m``) whose best path visits ``s``. Entries for
    meta-states ``s`` does not belong to give the same count as if ``s``
    were moved there, which is what reassignment needs.

    With ``sample_fraction < 1`` only a seeded uniform subset of targets
    (see ``sample_targets``) is walked and the counts are rescaled by
    ``n / m`` to stay unbiased. ``weighted`` replaces each path's unit
    count by its likelihood.
    """
    a = np.asarray(assignment, dtype=np.int64)
    n = len(pm)
    if a.shape != (n,):
        raise ValueError(f"assignment has length {len(a)}, expected {n}")
    if not 0 < sample_fraction <= 1:
        raise ValueError("sample_fraction must lie in (0, 1]")
    if k is None:
        k = int(a.max()) + 1 if n else 0
    if n == 0:
        return np.zeros((0, k))
    out = _count_kernel(pm.pred_int32, pm.cost_by_target, a, int(k),
                        _sample_size(n, sample_fraction), seed % 2**32, bool(weighted))
    return out.reshape(n, k)


def own_counts(counts: np.ndarray, assignment: Sequence[int]) -> np.ndarray:
    """C(s, meta-state of s) for every state."""
    a = np.asarray(assignment, dtype=np.int64)
    return counts[np.arange(len(a)), a]


# -- on-disk cache ---------------------------------------------------------

def save_path_matrix(path: str | Path, pm: PathMatrix) -> None:
    """Write cost (float64) and pred (int32), row-major, after a magic header."""
    n = len(pm)
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<qq", n, n))
        fh.write(np.ascontiguousarray(pm.cost, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(pm.pred, dtype="<i4").tobytes())


def load_path_matrix(path: str | Path) -> PathMatrix:
    data = Path(path).read_bytes()
    if data[:8] != CACHE_MAGIC:
        raise ValueError(f"{path} is not a path-matrix cache file")
    rows, cols = struct.unpack("<qq", data[8:24])
    off = 24
    cost = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=off).reshape(rows, cols)
    off += rows * cols * 8
    pred = np.frombuffer(data, dtype="<i4", count=rows * cols, offset=off).reshape(rows, cols)
    return PathMatrix(cost.astype(np.float64), pred.astype(np.int32))


def cached_gamma(model: TransitionModel, cache_dir: str | Path | None = None) -> PathMatrix:
    """``build_gamma`` memoised on disk under ``cache_dir`` (or ``$SSX_CACHE_DIR``)."""
    cache_dir = cache_dir or os.environ.get("SSX_CACHE_DIR")
    if not cache_dir:
        return build_gamma(model)
    key = hashlib.sha256(model.content_hash().encode()).hexdigest()[:32]
    target = Path(cache_dir) / f"gamma-{key}.bin"
    if target.exists():
        return load_path_matrix(target)
    pm = build_gamma(model)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_suffix(".tmp")
    save_path_matrix(tmp, pm)
    tmp.replace(target)
    return pm
