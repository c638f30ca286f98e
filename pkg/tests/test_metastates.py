import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from ssx.env import enumerate_reachable, four_rooms_env
from ssx.metastates import (
    affinity,
    cluster_meta_states,
    normalized_laplacian,
    partition_objective,
    spectral_embed,
)
from ssx.pathgraph import build_gamma, out_path_counts
from ssx.policy import TransitionModel, induce_transition_model, value_iteration


def random_pm(seed, n, density=0.35):
    f = oracles.random_model(np.random.default_rng(seed), n, density)
    return build_gamma(TransitionModel.from_dense(f))


def relabel(a):
    seen = {}
    return [seen.setdefault(int(x), len(seen)) for x in a]


def test_laplacian_matches_oracle():
    pm = random_pm(0, 12)
    np.testing.assert_allclose(normalized_laplacian(affinity(pm)),
                               oracles.normalized_laplacian(pm.likelihood), atol=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_embedding_matches_jacobi(seed):
    pm = random_pm(seed, 12)
    k = 3
    emb = spectral_embed(pm, k)
    vals, vecs = oracles.jacobi_eigh(oracles.normalized_laplacian(pm.likelihood))
    np.testing.assert_allclose(emb.eigenvalues, vals[:k], atol=1e-10)
    # compare the spanned subspaces, which are sign and rotation free
    want = vecs[:, :k]
    unit = want / np.linalg.norm(want, axis=1, keepdims=True)
    np.testing.assert_allclose(emb.coords @ emb.coords.T, unit @ unit.T, atol=1e-8)
    np.testing.assert_allclose(np.linalg.norm(emb.coords, axis=1), 1.0)


def test_lowest_eigenvalue_is_zero_for_connected_graph():
    emb = spectral_embed(random_pm(4, 15), 2)
    assert emb.eigenvalues[0] == 0.0
    assert emb.eigenvalues[1] > 0


def test_sparse_eigensolver_agrees_with_dense(monkeypatch):
    import ssx.metastates as ms
    pm = random_pm(5, 40, density=0.1)
    dense = spectral_embed(pm, 4)
    monkeypatch.setattr(ms, "DENSE_EIGH_LIMIT", 10)
    sparse = ms.spectral_embed(pm, 4)
    np.testing.assert_allclose(sparse.eigenvalues, dense.eigenvalues, atol=1e-8)
    np.testing.assert_allclose(sparse.coords @ sparse.coords.T, dense.coords @ dense.coords.T,
                               atol=1e-6)


def test_embed_rejects_bad_k():
    with pytest.raises(ValueError):
        spectral_embed(random_pm(0, 5), 6)


@pytest.mark.parametrize("seed", range(5))
def test_eta_zero_is_plain_kmeans(seed):
    pm = random_pm(seed, 14)
    emb = spectral_embed(pm, 3)
    part = cluster_meta_states(emb, pm, 3, eta=0.0, eps_phi=1e-300, seed=seed, restarts=1)
    init = np.random.default_rng([seed, 0]).integers(3, size=14)
    assert len(set(init.tolist())) == 3
    ref = oracles.lloyd(emb.coords, init, 3)
    assert relabel(part.assignment) == relabel(ref)
    assert part.objective == pytest.approx(oracles.kmeans_objective(emb.coords, ref, 3), abs=1e-12)


def test_objective_matches_oracle():
    pm = random_pm(2, 10)
    emb = spectral_embed(pm, 2)
    a = [0, 1] * 5
    got = partition_objective(emb.coords, pm, a, 1.5, 2,
                              counts=out_path_counts(pm, a, 2, weighted=True))
    want = oracles.regularised_objective(emb.coords, pm.pred, pm.cost, a, 2, 1.5)
    assert got == pytest.approx(want, abs=1e-12)


def test_reported_objective_is_recomputable():
    pm = random_pm(8, 12)
    emb = spectral_embed(pm, 3)
    part = cluster_meta_states(emb, pm, 3, eta=1.0, seed=1, weighted_counts=True)
    want = oracles.regularised_objective(emb.coords, pm.pred, pm.cost, list(part.assignment), 3, 1.0)
    assert part.objective == pytest.approx(want, abs=1e-9)
    assert part.history[-1] == part.objective


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 16), st.integers(2, 4),
       st.floats(0.0, 50.0), st.booleans())
def test_history_never_increases(seed, n, k, eta, weighted):
    pm = random_pm(seed, n)
    emb = spectral_embed(pm, min(k, n))
    part = cluster_meta_states(emb, pm, k, eta, seed=seed, restarts=2, weighted_counts=weighted)
    h = np.asarray(part.history)
    assert np.all(np.diff(h) <= 1e-9)
    assert sorted(set(part.assignment.tolist())) == list(range(k))


def test_every_meta_state_is_non_empty_even_with_duplicate_points():
    pm = random_pm(1, 8)
    coords = np.zeros((8, 2))
    coords[0] = 1.0
    part = cluster_meta_states(coords, pm, 4, eta=0.0, seed=0)
    assert np.bincount(part.assignment, minlength=4).min() >= 1


def test_seeded_runs_are_identical():
    pm = random_pm(3, 15)
    emb = spectral_embed(pm, 3)
    a = cluster_meta_states(emb, pm, 3, 1.0, seed=9)
    b = cluster_meta_states(emb, pm, 3, 1.0, seed=9)
    np.testing.assert_array_equal(a.assignment, b.assignment)
    assert a.history == b.history
    # labels are numbered by first member
    assert a.assignment[0] == 0


def test_best_restart_is_kept():
    pm = random_pm(6, 14)
    emb = spectral_embed(pm, 3)
    part = cluster_meta_states(emb, pm, 3, 1.0, seed=2, restarts=6)
    assert len(part.restart_objectives) == 6
    assert part.objective == min(part.restart_objectives)


def test_small_brute_force_instance():
    pm = random_pm(11, 7)
    emb = spectral_embed(pm, 2)
    part = cluster_meta_states(emb, pm, 2, 1.0, seed=0, weighted_counts=True)
    best, _ = oracles.brute_force_partition(emb.coords, pm.pred, pm.cost, 2, 1.0)
    assert part.objective >= best - 1e-12
    assert part.objective <= best + 0.1 * abs(best) + 1e-12


def test_four_rooms_partition_is_stable_across_calls():
    env = four_rooms_env(7)
    states = enumerate_reachable(env)
    _, pol = value_iteration(env, states=states)
    pm = build_gamma(induce_transition_model(env, pol, states))
    emb = spectral_embed(pm, 4)
    a = cluster_meta_states(emb, pm, 4, 1.0, seed=0)
    b = cluster_meta_states(emb, pm, 4, 1.0, seed=0)
    assert a.assignment.tolist() == b.assignment.tolist()


@pytest.mark.parametrize("bad", [dict(k=0), dict(eta=-1.0), dict(eps_phi=0.0)])
def test_cluster_argument_checks(bad):
    pm = random_pm(0, 6)
    kw = dict(k=2, eta=1.0, eps_phi=None) | bad
    with pytest.raises(ValueError):
        cluster_meta_states(np.zeros((6, 2)), pm, kw["k"], kw["eta"], kw["eps_phi"])
