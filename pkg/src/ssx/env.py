"""Discrete gridworld environments: Four Rooms and MiniPac.

Both environments are immutable models. ``step_distribution`` is a pure
function of ``(state, action)`` returning every possible outcome with its
probability and reward, which is what the explanation pipeline needs to
marginalise a policy into state-to-state likelihoods.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Hashable, Iterable, NamedTuple, Sequence

import numpy as np

Cell = tuple[int, int]

MOVES: dict[str, Cell] = {
    "up": (-1, 0),
    "down": (1, 0),
    "left": (0, -1),
    "right": (0, 1),
    "stay": (0, 0),
}
# ghost headings index into this tuple; reversal of i is REVERSE[i]
GHOST_DIRS: tuple[str, ...] = ("up", "down", "left", "right")
REVERSE = (1, 0, 3, 2)

WALL, FOOD, PILL, AGENT, GHOST, EMPTY, GOAL = "#", ".", "o", "P", "G", " ", "X"
LAYOUT_CHARS = frozenset(WALL + FOOD + PILL + AGENT + GHOST + EMPTY + GOAL)


class InvalidConfiguration(ValueError):
    """Raised when an environment cannot be built from the given layout."""


class StateSpaceTruncated(RuntimeError):
    """Raised when reachable-state enumeration hits its cap."""

    def __init__(self, max_states: int):
        super().__init__(
            f"reachable state space exceeds {max_states} states; "
            "use a local approximation instead"
        )
        self.max_states = max_states


class RewardScheme(str, Enum):
    FOUR_ROOMS_GOAL = "FOUR_ROOMS_GOAL"
    EAT = "EAT"
    HUNT = "HUNT"


class GridState(NamedTuple):
    """Four Rooms state: the agent's cell."""

    agent_pos: Cell


class PacState(NamedTuple):
    """MiniPac state.

    ``food_mask`` is a bitmask over flat cell indices (``row * cols + col``).
    ``ghost_dir`` is the ghost's last heading (index into ``GHOST_DIRS``) or
    -1 before its first move. ``status`` is ``"live"`` or one of the
    absorbing outcomes ``"caught"``, ``"ghost_eaten"``, ``"cleared"``.
    """

    agent_pos: Cell
    ghost_pos: Cell
    ghost_dir: int
    food_mask: int
    pill_present: bool
    pill_eaten_timer: int
    status: str = "live"


Outcome = tuple[Hashable, float, float]


@dataclass(frozen=True)
class Layout:
    walls: np.ndarray
    food: np.ndarray
    pill: Cell | None = None
    agent_start: Cell | None = None
    ghost_start: Cell | None = None
    goal: Cell | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.walls.shape

    def open_cells(self) -> list[Cell]:
        return [tuple(c) for c in np.argwhere(~self.walls).tolist()]

    def to_text(self) -> str:
        rows, cols = self.shape
        grid = [[WALL if self.walls[r, c] else (FOOD if self.food[r, c] else EMPTY)
                 for c in range(cols)] for r in range(rows)]
        for cell, ch in ((self.pill, PILL), (self.goal, GOAL),
                         (self.ghost_start, GHOST), (self.agent_start, AGENT)):
            if cell is not None:
                grid[cell[0]][cell[1]] = ch
        return "\n".join("".join(row) for row in grid) + "\n"


def parse_layout(text: str) -> Layout:
    """Parse a plain-text layout, one character per cell.

    Short rows are padded with empty cells. Markers for the agent, ghost,
    pill and goal may appear at most once each.
    """
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines = lines[:-1]
    if not lines:
        raise InvalidConfiguration("empty layout")
    cols = max(len(line) for line in lines)
    rows = len(lines)
    walls = np.zeros((rows, cols), dtype=bool)
    food = np.zeros((rows, cols), dtype=bool)
    marks: dict[str, Cell] = {}
    for r, line in enumerate(lines):
        for c, ch in enumerate(line.ljust(cols, EMPTY)):
            if ch not in LAYOUT_CHARS:
                raise InvalidConfiguration(f"unknown layout character {ch!r} at {(r, c)}")
            if ch == WALL:
                walls[r, c] = True
            elif ch == FOOD:
                food[r, c] = True
            elif ch in (PILL, AGENT, GHOST, GOAL):
                if ch in marks:
                    raise InvalidConfiguration(f"marker {ch!r} appears more than once")
                marks[ch] = (r, c)
    return Layout(walls=walls, food=food, pill=marks.get(PILL),
                  agent_start=marks.get(AGENT), ghost_start=marks.get(GHOST),
                  goal=marks.get(GOAL))


def _in_bounds(walls: np.ndarray, cell: Cell) -> bool:
    r, c = cell
    return 0 <= r < walls.shape[0] and 0 <= c < walls.shape[1]


def is_open(walls: np.ndarray, cell: Cell) -> bool:
    return _in_bounds(walls, cell) and not walls[cell]


def bounce(walls: np.ndarray, cell: Cell, move: Cell) -> Cell:
    """Move one cell, staying in place when the target is a wall or off-grid."""
    nxt = (cell[0] + move[0], cell[1] + move[1])
    return nxt if is_open(walls, nxt) else cell


def bfs_distances(walls: np.ndarray, source: Cell) -> np.ndarray:
    """Grid BFS distances from ``source`` over open cells (-1 where unreachable)."""
    dist = np.full(walls.shape, -1, dtype=np.int64)
    if not is_open(walls, source):
        return dist
    dist[source] = 0
    queue = deque([source])
    while queue:
        cell = queue.popleft()
        for name in GHOST_DIRS:
            dr, dc = MOVES[name]
            nxt = (cell[0] + dr, cell[1] + dc)
            if is_open(walls, nxt) and dist[nxt] < 0:
                dist[nxt] = dist[cell] + 1
                queue.append(nxt)
    return dist


def _check_connected(walls: np.ndarray) -> None:
    open_cells = np.argwhere(~walls)
    if len(open_cells) == 0:
        raise InvalidConfiguration("layout has no open cells")
    dist = bfs_distances(walls, tuple(open_cells[0]))
    if (dist[~walls] < 0).any():
        raise InvalidConfiguration("open region of layout is not connected")


class EnvModel:
    """Common surface of the environments used by the explanation pipeline."""

    actions: tuple[str, ...]
    reward_scheme: RewardScheme
    layout: Layout

    @property
    def grid(self) -> np.ndarray:
        return self.layout.walls

    def initial_state(self) -> Hashable:
        raise NotImplementedError

    def step_distribution(self, state, action: int) -> list[Outcome]:
        raise NotImplementedError

    def goal_predicate(self, state) -> bool:
        raise NotImplementedError

    def is_terminal(self, state) -> bool:
        raise NotImplementedError

    def encode(self, state) -> str:
        raise NotImplementedError

    def decode(self, text: str):
        raise NotImplementedError

    def successors(self, state) -> list[Hashable]:
        """Distinct next states over all actions, in action/outcome order."""
        seen: dict[Hashable, None] = {}
        for a in range(len(self.actions)):
            for nxt, p, _ in self.step_distribution(state, a):
                if p > 0:
                    seen.setdefault(nxt)
        return list(seen)


def _merge(outcomes: Iterable[Outcome]) -> list[Outcome]:
    merged: dict[Hashable, list[float]] = {}
    for state, p, r in outcomes:
        if state in merged:
            merged[state][0] += p
            merged[state][1] += p * r
        else:
            merged[state] = [p, p * r]
    return [(s, p, (pr / p if p > 0 else 0.0)) for s, (p, pr) in merged.items()]


class FourRooms(EnvModel):
    actions = ("up", "down", "left", "right")
    reward_scheme = RewardScheme.FOUR_ROOMS_GOAL

    def __init__(self, layout: Layout, goal: Cell, start: Cell | None = None):
        _check_connected(layout.walls)
        if not is_open(layout.walls, goal):
            raise InvalidConfiguration(f"goal {goal} is not an open cell")
        self.layout = layout
        self.goal = tuple(goal)
        self.start = tuple(start) if start is not None else layout.agent_start
        if self.start is not None and not is_open(layout.walls, self.start):
            raise InvalidConfiguration(f"start {self.start} is not an open cell")
        self._moves = [MOVES[a] for a in self.actions]

    def initial_state(self) -> GridState:
        if self.start is not None:
            return GridState(self.start)
        cells = self.layout.open_cells()
        return GridState(cells[-1])

    def step_distribution(self, state: GridState, action: int) -> list[Outcome]:
        if state.agent_pos == self.goal:
            return [(state, 1.0, 0.0)]
        nxt = bounce(self.layout.walls, state.agent_pos, self._moves[action])
        return [(GridState(nxt), 1.0, 1.0 if nxt == self.goal else 0.0)]

    def goal_predicate(self, state: GridState) -> bool:
        return state.agent_pos == self.goal

    is_terminal = goal_predicate

    def encode(self, state: GridState) -> str:
        return f"{state.agent_pos[0]},{state.agent_pos[1]}"

    def decode(self, text: str) -> GridState:
        r, c = (int(v) for v in text.split(","))
        return GridState((r, c))

    def rooms(self) -> dict[Cell, int]:
        """Room label per open cell of the default layout; doors map to -1.

        Rooms are numbered by quadrant: 0 upper-left, 1 upper-right,
        2 lower-left, 3 lower-right.
        """
        rows, cols = self.layout.shape
        mr, mc = rows // 2, cols // 2
        labels = {}
        for cell in self.layout.open_cells():
            r, c = cell
            if r == mr or c == mc:
                labels[cell] = -1
            else:
                labels[cell] = 2 * int(r > mr) + int(c > mc)
        return labels

    def doors(self) -> list[Cell]:
        return [cell for cell, room in self.rooms().items() if room == -1]


def four_rooms_layout(grid_size: int) -> Layout:
    """Four equal rooms split by a wall cross with one door per wall segment."""
    if grid_size < 5:
        raise InvalidConfiguration("grid_size must be at least 5")
    n = grid_size
    m = n // 2
    walls = np.zeros((n, n), dtype=bool)
    walls[m, :] = True
    walls[:, m] = True
    walls[(m - 1) // 2, m] = False
    walls[m + 1 + (n - m - 2) // 2, m] = False
    walls[m, (m - 1) // 2] = False
    walls[m, m + 1 + (n - m - 2) // 2] = False
    return Layout(walls=walls, food=np.zeros_like(walls))


def four_rooms_env(grid_size: int = 11, goal: Cell | None = None,
                   start: Cell | None = None) -> FourRooms:
    """Four Rooms on an ``grid_size`` square; goal defaults to the upper-right corner."""
    layout = four_rooms_layout(grid_size)
    if goal is None:
        goal = (0, grid_size - 1)
    if start is None:
        start = (grid_size - 1, 0)
    return FourRooms(layout, goal, start)


DEFAULT_MINIPAC_LAYOUT = """\
G.........
.###.####.
.#......#.
.#.####.#.
.#..o...#.
.####.###.
P.........
"""


class MiniPac(EnvModel):
    actions = ("up", "down", "left", "right", "stay")

    def __init__(self, layout: Layout, scheme: RewardScheme | str = RewardScheme.EAT,
                 pill_duration: int = 8, food_reward: float = 1.0,
                 pill_reward: float = -1.0, ghost_reward: float = 10.0):
        scheme = RewardScheme(scheme)
        if scheme is RewardScheme.FOUR_ROOMS_GOAL:
            raise InvalidConfiguration("MiniPac needs the EAT or HUNT scheme")
        _check_connected(layout.walls)
        if layout.food[layout.walls].any():
            raise InvalidConfiguration("food placed on a wall")
        for name in ("pill", "agent_start", "ghost_start"):
            cell = getattr(layout, name)
            if cell is not None and not is_open(layout.walls, cell):
                raise InvalidConfiguration(f"{name} {cell} is not an open cell")
        if layout.agent_start is None or layout.ghost_start is None:
            raise InvalidConfiguration("MiniPac layout needs both P and G markers")
        self.layout = layout
        self.reward_scheme = scheme
        self.pill_duration = pill_duration
        self.rows, self.cols = layout.shape
        if scheme is RewardScheme.EAT:
            self.food_reward, self.pill_reward, self.ghost_reward = food_reward, pill_reward, 0.0
        else:
            self.food_reward, self.pill_reward, self.ghost_reward = 0.0, 0.0, ghost_reward
        self._moves = [MOVES[a] for a in self.actions]
        self._ghost_moves = [MOVES[d] for d in GHOST_DIRS]

    # -- food bitmask helpers -------------------------------------------
    def cell_bit(self, cell: Cell) -> int:
        return 1 << (cell[0] * self.cols + cell[1])

    def food_cells(self, mask: int) -> list[Cell]:
        out = []
        idx = 0
        while mask:
            if mask & 1:
                out.append(divmod(idx, self.cols))
            mask >>= 1
            idx += 1
        return out

    def food_matrix(self, mask: int) -> np.ndarray:
        flat = np.zeros(self.rows * self.cols, dtype=bool)
        for r, c in self.food_cells(mask):
            flat[r * self.cols + c] = True
        return flat.reshape(self.rows, self.cols)

    def mask_from_matrix(self, food: np.ndarray) -> int:
        mask = 0
        for r, c in np.argwhere(food):
            mask |= self.cell_bit((int(r), int(c)))
        return mask

    # -- model ------------------------------------------------------------
    def initial_state(self) -> PacState:
        return PacState(
            agent_pos=self.layout.agent_start,
            ghost_pos=self.layout.ghost_start,
            ghost_dir=-1,
            food_mask=self.mask_from_matrix(self.layout.food),
            pill_present=self.layout.pill is not None,
            pill_eaten_timer=0,
        )

    def ghost_options(self, pos: Cell, heading: int) -> list[tuple[Cell, int]]:
        """Legal ghost moves: uniform over open neighbours, no reversal unless forced."""
        legal = []
        for d, move in enumerate(self._ghost_moves):
            nxt = (pos[0] + move[0], pos[1] + move[1])
            if is_open(self.layout.walls, nxt):
                legal.append((nxt, d))
        if not legal:
            return [(pos, heading)]
        if heading >= 0 and len(legal) > 1:
            forward = [(c, d) for c, d in legal if d != REVERSE[heading]]
            if forward:
                return forward
        return legal

    def step_distribution(self, state: PacState, action: int) -> list[Outcome]:
        if state.status != "live":
            return [(state, 1.0, 0.0)]
        timer = max(state.pill_eaten_timer - 1, 0)
        agent = bounce(self.layout.walls, state.agent_pos, self._moves[action])
        reward = 0.0
        food = state.food_mask
        bit = self.cell_bit(agent)
        if food & bit:
            food &= ~bit
            reward += self.food_reward
        pill = state.pill_present
        if pill and agent == self.layout.pill:
            pill = False
            timer = self.pill_duration
            reward += self.pill_reward
        edible = timer > 0

        def terminal(ghost: Cell, heading: int) -> Outcome:
            if edible:
                s = PacState(agent, ghost, heading, food, pill, timer, "ghost_eaten")
                return (s, 1.0, reward + self.ghost_reward)
            return (PacState(agent, ghost, heading, food, pill, timer, "caught"), 1.0, reward)

        if agent == state.ghost_pos:
            return [terminal(state.ghost_pos, state.ghost_dir)]
        if food == 0 and state.food_mask != 0:
            return [(PacState(agent, state.ghost_pos, state.ghost_dir, food, pill,
                              timer, "cleared"), 1.0, reward)]
        options = self.ghost_options(state.ghost_pos, state.ghost_dir)
        p = 1.0 / len(options)
        outcomes = []
        for ghost, heading in options:
            if ghost == agent:
                s, _, r = terminal(ghost, heading)
            else:
                s, r = PacState(agent, ghost, heading, food, pill, timer), reward
            outcomes.append((s, p, r))
        return _merge(outcomes)

    def goal_predicate(self, state: PacState) -> bool:
        if self.reward_scheme is RewardScheme.EAT:
            return state.status == "cleared"
        return state.status == "ghost_eaten"

    def is_terminal(self, state: PacState) -> bool:
        return state.status != "live"

    def encode(self, state: PacState) -> str:
        (ar, ac), (gr, gc) = state.agent_pos, state.ghost_pos
        return (f"a{ar},{ac};g{gr},{gc};d{state.ghost_dir};f{state.food_mask:x};"
                f"p{int(state.pill_present)};t{state.pill_eaten_timer};{state.status}")

    def decode(self, text: str) -> PacState:
        parts = text.split(";")
        if len(parts) != 7:
            raise ValueError(f"malformed MiniPac state {text!r}")
        agent = tuple(int(v) for v in parts[0][1:].split(","))
        ghost = tuple(int(v) for v in parts[1][1:].split(","))
        return PacState(agent, ghost, int(parts[2][1:]), int(parts[3][1:], 16),
                        parts[4][1:] == "1", int(parts[5][1:]), parts[6])


def minipac_env(layout: str | Layout = DEFAULT_MINIPAC_LAYOUT,
                scheme: RewardScheme | str = RewardScheme.EAT, **kwargs) -> MiniPac:
    if isinstance(layout, str):
        layout = parse_layout(layout)
    return MiniPac(layout, scheme, **kwargs)


@dataclass
class StateSpace:
    """Ordered, deduplicated states with a dense index.

    ``boundary`` marks states whose expansion was cut off (local
    approximations); they are made absorbing when a transition model is
    induced on the space.
    """

    states: list
    boundary: np.ndarray | None = None
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {s: i for i, s in enumerate(self.states)}
        if len(self.index) != len(self.states):
            raise ValueError("duplicate states")
        if self.boundary is None:
            self.boundary = np.zeros(len(self.states), dtype=bool)

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    def __contains__(self, state) -> bool:
        return state in self.index

    def __getitem__(self, i: int):
        return self.states[i]


def enumerate_reachable(env: EnvModel, start=None, max_states: int = 100_000) -> StateSpace:
    """Breadth-first closure of ``start`` under every action and outcome."""
    if start is None:
        start = env.initial_state()
    order = [start]
    seen = {start}
    queue = deque([start])
    while queue:
        state = queue.popleft()
        for nxt in env.successors(state):
            if nxt not in seen:
                if len(order) >= max_states:
                    raise StateSpaceTruncated(max_states)
                seen.add(nxt)
                order.append(nxt)
                queue.append(nxt)
    return StateSpace(order)


def random_live_states(env: MiniPac, n: int, rng: np.random.Generator,
                       min_ghost_distance: int = 0, pill_eaten: bool | None = None,
                       food_fraction: float = 0.6, max_draws: int = 10_000) -> list[PacState]:
    """Sample plausible live MiniPac boards for studies and tests.

    Raises ValueError if ``max_draws`` consecutive draws are all rejected,
    which happens when the constraints cannot be met on this layout.
    """
    cells = env.layout.open_cells()
    food_cells = [tuple(c) for c in np.argwhere(env.layout.food).tolist()]
    out = []
    misses = 0
    while len(out) < n:
        if misses >= max_draws:
            raise ValueError(f"no board satisfies min_ghost_distance={min_ghost_distance} "
                             f"after {max_draws} draws")
        misses += 1
        agent = cells[rng.integers(len(cells))]
        ghost = cells[rng.integers(len(cells))]
        if ghost == agent:
            continue
        if min_ghost_distance and bfs_distances(env.layout.walls, agent)[ghost] < min_ghost_distance:
            continue
        keep = [c for c in food_cells if c != agent and rng.random() < food_fraction]
        if not keep:
            continue
        mask = 0
        for c in keep:
            mask |= env.cell_bit(c)
        eaten = bool(rng.random() < 0.5) if pill_eaten is None else pill_eaten
        has_pill = env.layout.pill is not None and not eaten and agent != env.layout.pill
        timer = env.pill_duration if (eaten and env.layout.pill is not None) else 0
        out.append(PacState(agent, ghost, int(rng.integers(-1, 4)), mask, has_pill, timer))
        misses = 0
    return out


def agent_cells(states: Sequence) -> list[Cell]:
    return [s.agent_pos for s in states]
