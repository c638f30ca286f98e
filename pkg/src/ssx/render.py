"""SVG rendering of explanations and study curves.

Output is plain SVG text built from string templates, so identical inputs
give identical bytes and documents can be compared in tests.
"""

from __future__ import annotations

from html import escape
from typing import Sequence

import numpy as np

from .env import FourRooms, MiniPac, PacState

# meta-state fills for grid boards
PALETTE = ("#4e79a7", "#f28e2b", "#59a14f", "#b07aa1", "#76b7b2",
           "#edc948", "#9c755f", "#e15759", "#bab0ac", "#ff9da7")

# board colours for MiniPac panels
PACMAN = "#00FF00"
GHOST = "#FF0000"
GHOST_EDIBLE = "#FFFF00"
PILL = "#00FFFF"
FOOD = "#0000FF"
FOOD_EATEN = "#000000"
WALL = "#FFFFFF"
FLOOR = "#808080"
STRATEGIC_BG = "#FFC0CB"
PANEL_BG = "#DDDDDD"


class RenderError(ValueError):
    pass


class Svg:
    """Minimal SVG builder with fixed number formatting."""

    def __init__(self, width: float, height: float):
        self.width, self.height = width, height
        self.parts: list[str] = []

    @staticmethod
    def _n(x: float) -> str:
        return f"{x:.2f}".rstrip("0").rstrip(".")

    def rect(self, x, y, w, h, fill, stroke=None, **extra):
        s = f' stroke="{stroke}"' if stroke else ""
        more = "".join(f' {k.replace("_", "-")}="{v}"' for k, v in extra.items())
        self.parts.append(f'<rect x="{self._n(x)}" y="{self._n(y)}" width="{self._n(w)}" '
                          f'height="{self._n(h)}" fill="{fill}"{s}{more}/>')

    def circle(self, cx, cy, r, fill, stroke=None):
        s = f' stroke="{stroke}" stroke-width="1"' if stroke else ""
        self.parts.append(f'<circle cx="{self._n(cx)}" cy="{self._n(cy)}" r="{self._n(r)}" '
                          f'fill="{fill}"{s}/>')

    def line(self, x1, y1, x2, y2, stroke="#000000", width=1):
        self.parts.append(f'<line x1="{self._n(x1)}" y1="{self._n(y1)}" x2="{self._n(x2)}" '
                          f'y2="{self._n(y2)}" stroke="{stroke}" stroke-width="{width}"/>')

    def polyline(self, pts, stroke, width=1.5):
        p = " ".join(f"{self._n(x)},{self._n(y)}" for x, y in pts)
        self.parts.append(f'<polyline points="{p}" fill="none" stroke="{stroke}" '
                          f'stroke-width="{width}"/>')

    def text(self, x, y, s, size=12, anchor="start", fill="#000000"):
        self.parts.append(f'<text x="{self._n(x)}" y="{self._n(y)}" font-size="{size}" '
                          f'text-anchor="{anchor}" fill="{fill}" '
                          f'font-family="sans-serif">{escape(str(s))}</text>')

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self._n(self.width)}" '
                f'height="{self._n(self.height)}" viewBox="0 0 {self._n(self.width)} '
                f'{self._n(self.height)}">')
        return "\n".join([head, *self.parts, "</svg>"]) + "\n"


def _banner(svg: Svg, message: str) -> None:
    svg.rect(0, 0, svg.width, 18, "#FFF3B0", stroke="#C08000")
    svg.text(6, 13, f"warning: {message}", size=11, fill="#803000")


def render_four_rooms(env: FourRooms, states: Sequence, assignment: Sequence[int],
                      strategic: Sequence[Sequence[int]], cell: int = 28,
                      title: str | None = None, degenerate: Sequence[bool] = ()) -> str:
    """One board: open cells filled by meta-state, strategic states as circles.

    ``strategic[m]`` lists state indices in selection order; earlier picks
    get larger markers.
    """
    rows, cols = env.layout.shape
    top = 22 if (title or any(degenerate)) else 0
    svg = Svg(cols * cell, rows * cell + top)
    if any(degenerate):
        bad = [str(m) for m, d in enumerate(degenerate) if d]
        _banner(svg, f"meta-state {', '.join(bad)} has no out-paths")
    elif title:
        svg.text(4, 15, title, size=12)
    k = max(len(strategic), int(max(assignment)) + 1 if len(assignment) else 0)
    if k > len(PALETTE):
        raise RenderError(f"at most {len(PALETTE)} meta-states can be coloured, got {k}")
    fill = {}
    for i, s in enumerate(states):
        fill[s.agent_pos] = PALETTE[int(assignment[i])]
    for r in range(rows):
        for c in range(cols):
            colour = "#333333" if env.layout.walls[r, c] else fill.get((r, c), "#FFFFFF")
            svg.rect(c * cell, top + r * cell, cell, cell, colour, stroke="#222222")
    for picks in strategic:
        for rank, idx in enumerate(picks):
            r, c = states[idx].agent_pos
            radius = cell * max(0.42 - 0.1 * rank, 0.15)
            svg.circle((c + 0.5) * cell, top + (r + 0.5) * cell, radius, "#FFFFFF",
                       stroke="#000000")
    if env.goal is not None:
        r, c = env.goal
        svg.text((c + 0.5) * cell, top + (r + 0.68) * cell, "G", size=cell // 2, anchor="middle")
    return svg.render()


def _pac_panel(svg: Svg, env: MiniPac, state: PacState, x0: float, y0: float,
               cell: float, background: str) -> None:
    rows, cols = env.layout.shape
    svg.rect(x0 - 3, y0 - 3, cols * cell + 6, rows * cell + 6, background)
    food = env.food_matrix(state.food_mask)
    for r in range(rows):
        for c in range(cols):
            x, y = x0 + c * cell, y0 + r * cell
            if env.layout.walls[r, c]:
                svg.rect(x, y, cell, cell, WALL)
                continue
            svg.rect(x, y, cell, cell, FLOOR)
            if env.layout.food[r, c]:
                svg.circle(x + cell / 2, y + cell / 2, cell * 0.18, FOOD if food[r, c] else FOOD_EATEN)
    if state.pill_present and env.layout.pill is not None:
        r, c = env.layout.pill
        svg.circle(x0 + (c + 0.5) * cell, y0 + (r + 0.5) * cell, cell * 0.3, PILL)
    r, c = state.ghost_pos
    ghost = GHOST_EDIBLE if state.pill_eaten_timer > 0 else GHOST
    svg.rect(x0 + c * cell + cell * 0.15, y0 + r * cell + cell * 0.15, cell * 0.7, cell * 0.7, ghost)
    r, c = state.agent_pos
    svg.circle(x0 + (c + 0.5) * cell, y0 + (r + 0.5) * cell, cell * 0.4, PACMAN)


def render_minipac(env: MiniPac, states: Sequence, assignment: Sequence[int],
                   strategic: Sequence[Sequence[int]], samples: int = 3, cell: int = 12,
                   degenerate: Sequence[bool] = (), seed: int = 0) -> str:
    """One strip per meta-state: sample members, then the priority strategic
    state on a pink panel.

    Members are drawn with a seeded generator so the same inputs always
    give the same picture.
    """
    rows, cols = env.layout.shape
    pw, ph = cols * cell + 12, rows * cell + 12
    k = len(strategic)
    top = 22 if any(degenerate) else 0
    svg = Svg((samples + 1) * pw + 60, k * (ph + 8) + top)
    if any(degenerate):
        bad = [str(m) for m, d in enumerate(degenerate) if d]
        _banner(svg, f"meta-state {', '.join(bad)} has no out-paths")
    rng = np.random.default_rng(seed)
    a = np.asarray(assignment)
    for m in range(k):
        y = top + m * (ph + 8) + 6
        svg.text(4, y + ph / 2, f"M{m}", size=12)
        picks = list(strategic[m])
        members = [int(i) for i in np.flatnonzero(a == m) if int(i) not in picks]
        if len(members) > samples:
            members = sorted(rng.choice(members, size=samples, replace=False).tolist())
        for j, idx in enumerate(members):
            _pac_panel(svg, env, states[idx], 60 + j * pw, y, cell, PANEL_BG)
        if picks:
            _pac_panel(svg, env, states[picks[0]], 60 + samples * pw, y, cell, STRATEGIC_BG)
    return svg.render()


def render_explanation(expl, env, states: Sequence, **style) -> str:
    """Dispatch on the environment type."""
    strategic = [s.states for s in expl.strategic]
    degenerate = [s.degenerate or not s.states for s in expl.strategic]
    assignment = expl.partition.assignment
    if len(assignment) != len(states):
        raise RenderError("explanation does not match the state list")
    if isinstance(env, FourRooms):
        return render_four_rooms(env, states, assignment, strategic, degenerate=degenerate, **style)
    if isinstance(env, MiniPac):
        return render_minipac(env, states, assignment, strategic, degenerate=degenerate, **style)
    raise RenderError(f"no renderer for {type(env).__name__}")


def line_chart(series: dict[str, tuple[Sequence[float], Sequence[float]]],
               xlabel: str = "", ylabel: str = "", title: str = "",
               width: int = 480, height: int = 320, log_y: bool = False) -> str:
    """Simple multi-series line chart with axes and a legend."""
    left, right, top, bottom = 56, 16, 28, 40
    xs = np.concatenate([np.asarray(x, float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, float) for _, y in series.values()])
    if log_y:
        ys = np.log10(np.maximum(ys, 1e-12))
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = min(float(ys.min()), 0.0) if not log_y else float(ys.min()), float(ys.max())
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    pw, ph = width - left - right, height - top - bottom

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + ph - (y - y0) / (y1 - y0) * ph

    svg = Svg(width, height)
    svg.rect(0, 0, width, height, "#FFFFFF")
    svg.line(left, top + ph, left + pw, top + ph)
    svg.line(left, top, left, top + ph)
    for t in np.linspace(x0, x1, 5):
        svg.text(px(t), top + ph + 14, f"{t:g}", size=10, anchor="middle")
    for t in np.linspace(y0, y1, 5):
        label = f"1e{t:.1f}" if log_y else f"{t:.3g}"
        svg.text(left - 4, py(t) + 3, label, size=10, anchor="end")
    svg.text(left + pw / 2, height - 6, xlabel, size=11, anchor="middle")
    svg.text(10, top - 10, ylabel, size=11)
    if title:
        svg.text(left + pw / 2, 14, title, size=12, anchor="middle")
    for i, (name, (x, y)) in enumerate(series.items()):
        colour = PALETTE[i % len(PALETTE)]
        y = np.asarray(y, float)
        if log_y:
            y = np.log10(np.maximum(y, 1e-12))
        svg.polyline([(px(a), py(b)) for a, b in zip(x, y)], colour)
        svg.line(left + pw - 90, top + 8 + 14 * i, left + pw - 74, top + 8 + 14 * i, colour, 2)
        svg.text(left + pw - 70, top + 12 + 14 * i, name, size=10)
    return svg.render()
