import numpy as np
import pytest

import oracles
from ssx.env import (
    DEFAULT_MINIPAC_LAYOUT,
    InvalidConfiguration,
    PacState,
    StateSpaceTruncated,
    enumerate_reachable,
    four_rooms_env,
    minipac_env,
    parse_layout,
    random_live_states,
)
from ssx.pathgraph import local_approximation


def test_four_rooms_layout():
    env = four_rooms_env(11)
    walls = env.layout.walls
    assert walls.shape == (11, 11)
    assert sorted(env.doors()) == [(2, 5), (5, 2), (5, 8), (8, 5)]
    assert (~walls).sum() == 104
    rooms = env.rooms()
    assert rooms[(0, 0)] == 0 and rooms[(0, 10)] == 1 and rooms[(10, 0)] == 2 and rooms[(10, 10)] == 3
    assert env.goal == (0, 10)


def test_four_rooms_dynamics():
    env = four_rooms_env(11)
    s = env.initial_state()
    assert s.agent_pos == (10, 0)
    # bumping a wall leaves the agent in place
    (nxt, p, r), = env.step_distribution(s, env.actions.index("left"))
    assert nxt == s and p == 1.0 and r == 0.0
    (nxt, _, _), = env.step_distribution(s, env.actions.index("up"))
    assert nxt.agent_pos == (9, 0)
    near = env.decode("1,10")
    (nxt, _, r), = env.step_distribution(near, env.actions.index("up"))
    assert env.goal_predicate(nxt) and r == 1.0
    (again, p, r), = env.step_distribution(nxt, 0)
    assert again == nxt and r == 0.0


def test_four_rooms_rejects_bad_goal():
    with pytest.raises(InvalidConfiguration):
        four_rooms_env(11, goal=(5, 5))
    with pytest.raises(InvalidConfiguration):
        four_rooms_env(3)


def test_encode_roundtrip():
    fr = four_rooms_env(11)
    for s in enumerate_reachable(fr):
        assert fr.decode(fr.encode(s)) == s
    mp = minipac_env()
    for s in local_approximation(mp, mp.initial_state(), 4):
        assert mp.decode(mp.encode(s)) == s
    with pytest.raises(ValueError):
        mp.decode("a1,1")


def test_layout_parsing_errors():
    with pytest.raises(InvalidConfiguration):
        parse_layout("P.?\n")
    with pytest.raises(InvalidConfiguration):
        parse_layout("PP\n")
    with pytest.raises(InvalidConfiguration):
        minipac_env("P#.\n###\nG..\n")
    with pytest.raises(InvalidConfiguration):
        minipac_env("P..\n")


def test_layout_text_roundtrip():
    lay = parse_layout(DEFAULT_MINIPAC_LAYOUT)
    assert lay.to_text() == DEFAULT_MINIPAC_LAYOUT


def test_minipac_probabilities_sum_to_one():
    env = minipac_env()
    for s in random_live_states(env, 30, np.random.default_rng(0)):
        for a in range(len(env.actions)):
            out = env.step_distribution(s, a)
            assert sum(p for _, p, _ in out) == pytest.approx(1.0)
            assert len({o[0] for o in out}) == len(out)


def test_ghost_never_reverses_when_it_has_a_choice():
    env = minipac_env()
    # corridor cell on the top row: neighbours left and right only
    opts = env.ghost_options((0, 5), env_dir("right"))
    assert [c for c, _ in opts] == [(0, 6)]
    # dead end forces a reversal
    walls = parse_layout("###\n#P#\n#.#\n#G#\n###\n")
    env2 = minipac_env(walls)
    assert [c for c, _ in env2.ghost_options((3, 1), env_dir("down"))] == [(2, 1)]


def env_dir(name):
    from ssx.env import GHOST_DIRS
    return GHOST_DIRS.index(name)


def test_eating_food_pill_and_ghost():
    env = minipac_env()
    s = env.initial_state()
    (nxt, p, r), *_ = env.step_distribution(s, env.actions.index("right"))
    assert r == 1.0 and not env.food_matrix(nxt.food_mask)[6, 1]
    # step onto the pill
    pill = env.layout.pill
    s = PacState((pill[0], pill[1] - 1), (0, 0), -1, s.food_mask, True, 0)
    out = env.step_distribution(s, env.actions.index("right"))
    for nxt, _, r in out:
        assert not nxt.pill_present and nxt.pill_eaten_timer == env.pill_duration
        assert r == pytest.approx(env.pill_reward + (env.food_reward if s.food_mask & env.cell_bit(pill) else 0))


def test_collision_outcomes():
    hunt = minipac_env(scheme="HUNT")
    food = hunt.initial_state().food_mask
    edible = PacState((6, 1), (6, 2), -1, food, False, 3)
    (nxt, p, r), = hunt.step_distribution(edible, hunt.actions.index("right"))
    assert nxt.status == "ghost_eaten" and hunt.goal_predicate(nxt) and r == hunt.ghost_reward
    eat = minipac_env()
    danger = PacState((6, 1), (6, 2), -1, food, True, 0)
    (nxt, _, _), = eat.step_distribution(danger, eat.actions.index("right"))
    assert nxt.status == "caught" and eat.is_terminal(nxt) and not eat.goal_predicate(nxt)


def test_clearing_the_board_is_the_eat_goal():
    env = minipac_env()
    s = PacState((6, 0), (0, 0), -1, env.cell_bit((6, 1)), False, 0)
    (nxt, _, _), = env.step_distribution(s, env.actions.index("right"))
    assert nxt.status == "cleared" and env.goal_predicate(nxt)


def test_enumeration_matches_bfs_and_respects_cap():
    env = four_rooms_env(11)
    space = enumerate_reachable(env)
    assert set(space.states) == set(oracles.bfs_layers(env.successors, env.initial_state(), 200))
    with pytest.raises(StateSpaceTruncated):
        enumerate_reachable(minipac_env(), max_states=100)


def test_random_live_states_respect_constraints():
    env = minipac_env()
    for s in random_live_states(env, 20, np.random.default_rng(1), min_ghost_distance=3,
                                pill_eaten=True):
        assert oracles.grid_distance(env.layout.walls, s.agent_pos, s.ghost_pos) >= 3
        assert not s.pill_present and s.pill_eaten_timer == env.pill_duration
        assert s.status == "live" and s.food_mask
    with pytest.raises(ValueError):
        random_live_states(env, 1, np.random.default_rng(0), min_ghost_distance=99, max_draws=50)
