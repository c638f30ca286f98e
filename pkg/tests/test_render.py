import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from ssx.env import enumerate_reachable, four_rooms_env, minipac_env, random_live_states
from ssx.render import (
    PALETTE,
    STRATEGIC_BG,
    RenderError,
    line_chart,
    render_four_rooms,
    render_minipac,
)

NS = "{http://www.w3.org/2000/svg}"


def fills(svg):
    return [e.get("fill") for e in ET.fromstring(svg).iter(NS + "rect")]


@pytest.fixture(scope="module")
def rooms():
    env = four_rooms_env(11)
    states = enumerate_reachable(env)
    labels = env.rooms()
    a = [max(labels[s.agent_pos], 0) for s in states]
    return env, states, a


def test_four_rooms_uses_one_colour_per_meta_state(rooms):
    env, states, a = rooms
    svg = render_four_rooms(env, states, a, [[0], [1], [2], [3]])
    used = set(fills(svg)) & set(PALETTE)
    assert used == set(PALETTE[:4])
    assert len(ET.fromstring(svg).findall(NS + "circle")) == 4


def test_four_rooms_output_is_deterministic(rooms):
    env, states, a = rooms
    assert render_four_rooms(env, states, a, [[0, 5], [1], [2], [3]]) == \
           render_four_rooms(env, states, a, [[0, 5], [1], [2], [3]])


def test_degenerate_banner(rooms):
    env, states, a = rooms
    svg = render_four_rooms(env, states, a, [[0], [1], [2], [3]], degenerate=[False, True, False, False])
    assert "warning: meta-state 1 has no out-paths" in svg
    assert "warning" not in render_four_rooms(env, states, a, [[0], [1], [2], [3]])


def test_too_many_meta_states(rooms):
    env, states, _ = rooms
    with pytest.raises(RenderError):
        render_four_rooms(env, states, list(range(len(states))), [[i] for i in range(len(states))])


def test_minipac_strip_ends_with_pink_strategic_panel():
    env = minipac_env()
    states = random_live_states(env, 12, np.random.default_rng(0))
    a = [i % 2 for i in range(12)]
    svg = render_minipac(env, states, a, [[0], [1]], samples=3)
    panels = [f for f in fills(svg) if f in (STRATEGIC_BG, "#DDDDDD")]
    # each strip is three member panels then the strategic panel
    assert panels == ["#DDDDDD"] * 3 + [STRATEGIC_BG] + ["#DDDDDD"] * 3 + [STRATEGIC_BG]
    assert svg == render_minipac(env, states, a, [[0], [1]], samples=3)


def test_line_chart_is_valid_svg():
    svg = line_chart({"a": ([1, 2, 3], [1.0, 10.0, 100.0])}, "N", "states", log_y=True)
    root = ET.fromstring(svg)
    assert root.tag == NS + "svg"
    assert len(root.findall(NS + "polyline")) == 1
    assert not re.search(r"\d\.\d{3,}", svg)
