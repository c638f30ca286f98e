"""Meta-states by regularised spectral clustering of the path-likelihood graph."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .pathgraph import PathMatrix, out_path_counts, own_counts

DENSE_EIGH_LIMIT = 2500


@dataclass
class SpectralEmbedding:
    coords: np.ndarray
    eigenvalues: np.ndarray
    laplacian: np.ndarray = field(repr=False, default=None)


def affinity(pm: PathMatrix) -> np.ndarray:
    """Symmetrised path likelihood with an empty diagonal.

    States with no affinity to anything get a unit self-loop so the
    normalised Laplacian stays defined.
    """
    g = pm.likelihood
    w = 0.5 * (g + g.T)
    np.fill_diagonal(w, 0.0)
    isolated = w.sum(axis=1) <= 0
    w[isolated, isolated] = 1.0
    return w


def normalized_laplacian(w: np.ndarray) -> np.ndarray:
    d = w.sum(axis=1)
    inv = 1.0 / np.sqrt(d)
    lap = -(inv[:, None] * w * inv[None, :])
    lap[np.diag_indices_from(lap)] += 1.0
    return 0.5 * (lap + lap.T)


def spectral_embed(pm: PathMatrix, k: int) -> SpectralEmbedding:
    """Rows of the ``k`` lowest eigenvectors of the normalised Laplacian.

    Rows are scaled to unit length; all-zero rows are left as zero.
    """
    n = len(pm)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    lap = normalized_laplacian(affinity(pm))
    if n <= DENSE_EIGH_LIMIT or k >= n - 1:
        vals, vecs = scipy.linalg.eigh(lap, subset_by_index=[0, k - 1])
    else:
        # smallest eigenpairs of L are the largest of 2I - L
        shifted = 2.0 * np.eye(n) - lap
        vals, vecs = scipy.sparse.linalg.eigsh(shifted, k=k, which="LA", tol=0,
                                               v0=np.ones(n))
        vals = 2.0 - vals
        order = np.argsort(vals, kind="stable")
        vals, vecs = vals[order], vecs[:, order]
    vals = np.where(np.abs(vals) < 1e-12, 0.0, vals)
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    coords = np.divide(vecs, norms, out=np.zeros_like(vecs), where=norms > 1e-14)
    return SpectralEmbedding(coords, vals, lap)


@dataclass
class MetaStatePartition:
    assignment: np.ndarray
    centroids: np.ndarray
    objective: float
    eta: float
    history: list[float]
    counts: np.ndarray = field(repr=False)
    seed: int = 0
    converged: bool = True
    rejected_steps: int = 0
    restart_objectives: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def members(self, m: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == m)

    def meta_state_of(self, state: int) -> int:
        return int(self.assignment[state])

    def to_json(self) -> dict:
        return {
            "assignment": [int(x) for x in self.assignment],
            "centroids": [[float(x) for x in row] for row in self.centroids],
            "objective": float(self.objective),
            "history": [float(x) for x in self.history],
            "eta": float(self.eta),
            "seed": int(self.seed),
            "converged": bool(self.converged),
        }


def centroids_of(coords: np.ndarray, assignment: np.ndarray, k: int) -> np.ndarray:
    sums = np.zeros((k, coords.shape[1]))
    np.add.at(sums, assignment, coords)
    sizes = np.bincount(assignment, minlength=k).astype(float)
    return np.divide(sums, sizes[:, None], out=np.zeros_like(sums), where=sizes[:, None] > 0)


def _sq_dists(coords: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return ((coords[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _repair_empty(coords: np.ndarray, assignment: np.ndarray, k: int) -> np.ndarray:
    """Give each empty meta-state the state farthest from its own centroid."""
    a = assignment.copy()
    for m in range(k):
        sizes = np.bincount(a, minlength=k)
        if sizes[m] > 0:
            continue
        cents = centroids_of(coords, a, k)
        d = ((coords - cents[a]) ** 2).sum(axis=1)
        d[sizes[a] <= 1] = -np.inf
        a[int(np.argmax(d))] = m
    return a


def count_scale(n: int, normalize: bool) -> float:
    return 1.0 / (n * n) if normalize and n else 1.0


def partition_objective(coords: np.ndarray, pm: PathMatrix, assignment, eta: float,
                        k: int | None = None, normalize: bool = True,
                        sample_fraction: float = 1.0, seed: int = 0,
                        counts: np.ndarray | None = None) -> float:
    """Sum over states of squared distance to its centroid minus ``eta`` times
    its (scaled) out-path count in its own meta-state."""
    a = np.asarray(assignment, dtype=np.int64)
    if k is None:
        k = int(a.max()) + 1
    cents = centroids_of(coords, a, k)
    dist = float(((coords - cents[a]) ** 2).sum())
    if eta == 0:
        return dist
    if counts is None:
        counts = out_path_counts(pm, a, k, sample_fraction, seed)
    return dist - eta * count_scale(len(a), normalize) * float(own_counts(counts, a).sum())


def _relabel(assignment: np.ndarray, k: int) -> np.ndarray:
    """Number meta-states by the first state that belongs to them."""
    mapping = {}
    for m in assignment:
        if int(m) not in mapping:
            mapping[int(m)] = len(mapping)
    for m in range(k):
        mapping.setdefault(m, len(mapping))
    return np.array([mapping[int(m)] for m in assignment], dtype=np.int64)


def _single_run(coords, pm, k, eta, eps_phi, rng, normalize, sample_fraction,
                weighted, seed_base, max_iter):
    n = len(coords)
    scale = count_scale(n, normalize)

    def counts_for(a, it):
        if eta == 0:
            return np.zeros((n, k))
        return out_path_counts(pm, a, k, sample_fraction, seed=seed_base,
                               weighted=weighted)

    def evaluate(a, counts):
        cents = centroids_of(coords, a, k)
        xi = float(((coords - cents[a]) ** 2).sum())
        xi -= eta * scale * float(own_counts(counts, a).sum())
        return cents, xi

    a = _repair_empty(coords, rng.integers(k, size=n).astype(np.int64), k)
    counts = counts_for(a, 0)
    cents, xi = evaluate(a, counts)
    history = [xi]
    tol = eps_phi if eps_phi is not None else max(1e-6 * abs(xi), 1e-12)
    converged, rejected = False, 0
    for it in range(1, max_iter + 1):
        cost = _sq_dists(coords, cents) - eta * scale * counts
        new = _repair_empty(coords, np.argmin(cost, axis=1).astype(np.int64), k)
        if np.array_equal(new, a):
            converged = True
            break
        new_counts = counts_for(new, it)
        new_cents, new_xi = evaluate(new, new_counts)
        if new_xi > xi:
            # counts moved under the reassignment; keep the better partition
            rejected += 1
            converged = True
            break
        prev = xi
        a, counts, cents, xi = new, new_counts, new_cents, new_xi
        history.append(xi)
        if abs(prev - xi) < tol:
            converged = True
            break
    return a, counts, cents, xi, history, converged, rejected


def cluster_meta_states(emb: SpectralEmbedding | np.ndarray, pm: PathMatrix, k: int,
                        eta: float = 1.0, eps_phi: float | None = None, seed: int = 0,
                        restarts: int = 5, sample_fraction: float = 1.0,
                        normalize_counts: bool = True, weighted_counts: bool = False,
                        max_iter: int = 500) -> MetaStatePartition:
    """Regularised k-means over the spectral embedding.

    Starting from a seeded random assignment, states are repeatedly moved
    to the meta-state minimising squared distance to its centroid minus
    ``eta`` times their out-path count there, until the objective changes
    by less than ``eps_phi`` (default ``1e-6`` of the starting objective).
    The best of ``restarts`` runs is returned.
    """
    coords = emb.coords if isinstance(emb, SpectralEmbedding) else np.asarray(emb, float)
    n = len(coords)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    if eta < 0:
        raise ValueError("eta must be non-negative")
    if eps_phi is not None and eps_phi <= 0:
        raise ValueError("eps_phi must be positive")
    best = None
    objectives = []
    for r in range(max(1, restarts)):
        rng = np.random.default_rng([seed, r])
        run = _single_run(coords, pm, k, eta, eps_phi, rng, normalize_counts,
                          sample_fraction, weighted_counts, 1000 * r + seed * 100_003, max_iter)
        objectives.append(run[3])
        if best is None or run[3] < best[3]:
            best = run
    a, counts, cents, xi, history, converged, rejected = best
    labels = _relabel(a, k)
    order = np.zeros(k, dtype=np.int64)
    order[labels] = a
    return MetaStatePartition(
        assignment=labels,
        centroids=cents[order],
        objective=xi,
        eta=eta,
        history=history,
        counts=counts[:, order],
        seed=seed,
        converged=converged,
        rejected_steps=rejected,
        restart_objectives=objectives,
    )

