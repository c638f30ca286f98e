import csv
import warnings

import numpy as np
import pytest

import oracles
from ssx.env import enumerate_reachable, four_rooms_env, minipac_env, random_live_states
from ssx.evalharness import (
    HorizonTable,
    entity_distances,
    growth_study,
    horizon_faithfulness,
    k_sweep,
    perturbation_stability,
    remove_food,
    sampling_study,
    trajectory_roots,
    write_csv,
)
from ssx.pathgraph import build_gamma
from ssx.pipeline import minipac_params
from ssx.policy import TransitionModel, induce_transition_model, scripted_minipac_policy, value_iteration


@pytest.fixture(scope="module")
def pac():
    env = minipac_env()
    pol = scripted_minipac_policy(env)
    roots = random_live_states(env, 3, np.random.default_rng(0), min_ghost_distance=3,
                               pill_eaten=False)
    return env, pol, roots


def test_growth_matches_bfs(pac):
    env, _, roots = pac
    rows = growth_study(env, roots, 4)
    for n, mean in rows:
        want = np.mean([len(oracles.bfs_layers(env.successors, r, n)) for r in roots])
        assert mean == pytest.approx(want)
    assert [n for n, _ in rows] == [1, 2, 3, 4]


def test_entity_distances(pac):
    env, _, roots = pac
    a = roots[0]
    b = a._replace(agent_pos=(a.agent_pos[0], a.agent_pos[1] + 3))
    d = entity_distances(env, a, b)
    assert d == {"agent": 3.0, "ghost": 0.0, "food": 0.0}
    fr = four_rooms_env(11)
    assert entity_distances(fr, fr.decode("0,0"), fr.decode("3,4")) == {"agent": 5.0}


def test_remove_food(pac):
    env, _, roots = pac
    rng = np.random.default_rng(1)
    before = len(env.food_cells(roots[0].food_mask))
    after = remove_food(env, roots[0], 3, rng)
    assert len(env.food_cells(after.food_mask)) == before - 3
    assert after.food_mask & roots[0].food_mask == after.food_mask
    d = entity_distances(env, roots[0], after)["food"]
    assert d == pytest.approx(np.sqrt(3))
    with pytest.raises(ValueError):
        remove_food(env, roots[0], before + 1, rng)


def test_horizon_table_statistics():
    t = np.array([[0, 1, 2], [1, 0, 1], [2, 1, 0]], dtype=float)
    h = HorizonTable([3, 4, 5], {"agent": t, "ghost": 2 * t, "food": t})
    assert h.spearman("agent") == pytest.approx(1.0)
    assert h.mean("ghost") == pytest.approx(8 / 3)


def test_small_studies_run(pac):
    env, pol, roots = pac
    params = minipac_params(horizon=4)
    rows = sampling_study(env, pol, roots[:2], [1.0, 0.5], params=params, repeats=1)
    assert rows[0].displacement == 0.0 and rows[0].time_ratio == 1.0
    assert rows[1].displacement >= 0.0 and rows[1].count_time > 0
    h = horizon_faithfulness(env, pol, roots[:2], [3, 4], params)
    for table in h.tables.values():
        assert np.all(np.diag(table) == 0) and np.allclose(table, table.T)
    rep = perturbation_stability(env, pol, roots[:1], n_perturbations=2, params=params)
    assert rep.trials == 2 and len(rep.raw[("food", "food_removed=3")]) == 2
    assert rep.get("food", "food_removed=3") > 0
    with pytest.raises(ValueError):
        horizon_faithfulness(env, pol, roots, [4, 3], params)
    with pytest.raises(ValueError):
        sampling_study(env, pol, roots, [0.0], params=params)


def test_k_sweep_rows():
    f = oracles.random_model(np.random.default_rng(0), 12)
    pm = build_gamma(TransitionModel.from_dense(f))
    rows = k_sweep(pm, None, [2, 3, 4], seeds=[0, 1])
    assert [r[0] for r in rows] == [2, 3, 4]
    for _, obj, dist in rows:
        assert obj <= dist + 1e-12
    with pytest.raises(ValueError):
        k_sweep(pm, None, [3, 2])


def test_write_csv(tmp_path):
    p = write_csv(tmp_path / "a" / "t.csv", ["x", "y"], [(1, 0.5), (2, 1 / 3)])
    rows = list(csv.reader(open(p)))
    assert rows == [["x", "y"], ["1", "0.5"], ["2", "0.333333"]]


def test_trajectory_roots_follow_the_policy():
    env = minipac_env(scheme="HUNT")
    pol = scripted_minipac_policy(env)
    roots = trajectory_roots(env, pol, 6, seed=3)
    assert roots == trajectory_roots(env, pol, 6, seed=3)
    assert roots[0] == env.initial_state()
    assert len(set(roots)) == 6 and not any(env.is_terminal(r) for r in roots)
    with pytest.raises(ValueError):
        trajectory_roots(env, pol, 0)
