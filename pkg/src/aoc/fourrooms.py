"""Four-rooms gridworld with slip noise, episode caps, and hallway blocking.

The layout is parsed from a small text map: ``#`` is a wall, ``.`` is a
floor cell, and ``H`` is a hallway cell (walkable, but special for room
bookkeeping and blocking). Observations are one-hot vectors over the
walkable cells, indexed row-major.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, UsageError

UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3
ACTIONS = (UP, DOWN, LEFT, RIGHT)
DELTAS = ((-1, 0), (1, 0), (0, -1), (0, 1))

FOUR_ROOMS_TEXT = """\
#############
#.....#.....#
#.....#.....#
#.....H.....#
#.....#.....#
#.....#.....#
##H####.....#
#.....###H###
#.....#.....#
#.....#.....#
#.....H.....#
#.....#.....#
#############
"""

BUILTIN_LAYOUTS = {"fourrooms": FOUR_ROOMS_TEXT}

Cell = tuple[int, int]


@dataclass(frozen=True)
class GridLayout:
    """Static geometry of a grid: walls, walkable cells, hallways, rooms."""

    height: int
    width: int
    walls: np.ndarray
    walkable: tuple[Cell, ...]
    hallways: tuple[Cell, ...]
    rooms: tuple[frozenset, ...]
    text: str = field(repr=False, default="")
    _index: dict = field(repr=False, default_factory=dict)

    @property
    def n_states(self) -> int:
        return len(self.walkable)

    @property
    def n_hallways(self) -> int:
        return len(self.hallways)

    def cell_index(self, cell: Cell) -> int:
        try:
            return self._index[cell]
        except KeyError:
            raise UsageError(f"cell {cell} is not walkable") from None

    def is_walkable(self, cell: Cell) -> bool:
        return cell in self._index

    def room_of(self, cell: Cell) -> int | None:
        """Room id containing the cell, or None for hallway cells."""
        for i, room in enumerate(self.rooms):
            if cell in room:
                return i
        return None

    def observation(self, cell: Cell) -> np.ndarray:
        obs = np.zeros(self.n_states)
        obs[self.cell_index(cell)] = 1.0
        return obs


def _connected(cells: set) -> bool:
    if not cells:
        return True
    seen = set()
    stack = [next(iter(cells))]
    while stack:
        cell = stack.pop()
        if cell in seen:
            continue
        seen.add(cell)
        r, c = cell
        for dr, dc in DELTAS:
            nxt = (r + dr, c + dc)
            if nxt in cells and nxt not in seen:
                stack.append(nxt)
    return seen == cells


def _components(cells: set) -> list[set]:
    remaining = set(cells)
    out = []
    while remaining:
        comp = set()
        stack = [next(iter(remaining))]
        while stack:
            cell = stack.pop()
            if cell in comp:
                continue
            comp.add(cell)
            r, c = cell
            for dr, dc in DELTAS:
                nxt = (r + dr, c + dc)
                if nxt in remaining and nxt not in comp:
                    stack.append(nxt)
        remaining -= comp
        out.append(comp)
    return sorted(out, key=min)


def build_layout(spec: str = "fourrooms") -> GridLayout:
    """Build a validated layout from a builtin name, map text, or file path.

    Raises ConfigurationError when the map is malformed: unknown characters,
    ragged rows, no walkable cells, disconnected walkable cells, a walkable
    cell with no walkable neighbor, or a hallway whose removal disconnects
    the rest of the map.
    """
    if spec in BUILTIN_LAYOUTS:
        text = BUILTIN_LAYOUTS[spec]
    elif "\n" in spec:
        text = spec
    elif os.path.exists(spec):
        with open(spec) as fh:
            text = fh.read()
    else:
        raise ConfigurationError(
            f"layout {spec!r} is not a builtin name, map text, or readable file"
        )

    rows = [line for line in text.splitlines() if line]
    if not rows:
        raise ConfigurationError("layout text is empty")
    width = len(rows[0])
    if any(len(row) != width for row in rows):
        raise ConfigurationError("layout rows must all have the same length")
    bad = {ch for row in rows for ch in row} - {"#", ".", "H"}
    if bad:
        raise ConfigurationError(f"layout contains unknown characters: {sorted(bad)}")

    height = len(rows)
    walls = np.array([[ch == "#" for ch in row] for row in rows])
    walkable = [
        (r, c) for r in range(height) for c in range(width) if rows[r][c] != "#"
    ]
    hallways = [(r, c) for (r, c) in walkable if rows[r][c] == "H"]

    if not walkable:
        raise ConfigurationError("layout has no walkable cells")
    cells = set(walkable)
    for r, c in walkable:
        if not any((r + dr, c + dc) in cells for dr, dc in DELTAS):
            raise ConfigurationError(f"walkable cell {(r, c)} has no walkable neighbor")
    if not _connected(cells):
        raise ConfigurationError("walkable cells are not connected")
    for h in hallways:
        if not _connected(cells - {h}):
            raise ConfigurationError(
                f"blocking hallway {h} would disconnect the map; layout is too fragile"
            )

    rooms = tuple(frozenset(comp) for comp in _components(cells - set(hallways)))
    index = {cell: i for i, cell in enumerate(walkable)}
    return GridLayout(
        height=height,
        width=width,
        walls=walls,
        walkable=tuple(walkable),
        hallways=tuple(hallways),
        rooms=rooms,
        text="\n".join(rows) + "\n",
        _index=index,
    )


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    truncated: bool
    state: int


class FourRooms:
    """Episodic gridworld: -1 per step, +20 at the goal, optional slip noise.

    With probability ``slip`` the chosen action is replaced by a uniformly
    random one (which may coincide with it). Episodes end when the goal is
    reached (``done``) or at ``step_cap`` steps (``truncated``, not done).
    Moves into walls, off the grid, or into a blocked hallway leave the
    agent in place but still cost a step.
    """

    def __init__(
        self,
        layout: GridLayout,
        *,
        slip: float = 0.02,
        step_reward: float = -1.0,
        goal_reward: float = 20.0,
        step_cap: int = 2000,
        seed=None,
    ):
        if not 0.0 <= slip <= 1.0:
            raise ConfigurationError(f"slip must be in [0, 1], got {slip}")
        if step_cap < 1:
            raise ConfigurationError(f"step_cap must be positive, got {step_cap}")
        self.layout = layout
        self.slip = slip
        self.step_reward = step_reward
        self.goal_reward = goal_reward
        self.step_cap = step_cap
        self.rng = np.random.default_rng(seed)
        self.goal: Cell | None = None
        self.blocked: Cell | None = None
        self.agent: Cell | None = None
        self.steps = 0
        self.slip_count = 0
        self._running = False

    def block_hallway(self, hallway: int) -> None:
        """Permanently close one hallway cell. Not allowed mid-episode."""
        if self._running:
            raise UsageError("cannot block a hallway during an episode")
        if not 0 <= hallway < self.layout.n_hallways:
            raise ConfigurationError(
                f"hallway id {hallway} out of range, layout has {self.layout.n_hallways}"
            )
        cell = self.layout.hallways[hallway]
        if self.goal == cell:
            raise ConfigurationError(f"cannot block hallway {cell}: it holds the goal")
        self.blocked = cell

    def _free_cells(self) -> list[Cell]:
        return [c for c in self.layout.walkable if c != self.blocked]

    def reset(self, goal: Cell | str | None = None, seed=None) -> StepResult:
        """Start an episode; draws the start cell uniformly (never the goal).

        ``goal`` may be a cell, ``"random"`` to draw one, or None to keep
        the goal from the previous episode.
        """
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        if goal == "random":
            free = self._free_cells()
            self.goal = free[self.rng.integers(len(free))]
        elif goal is not None:
            goal = tuple(goal)
            if not self.layout.is_walkable(goal):
                raise ConfigurationError(f"goal {goal} is not a walkable cell")
            if goal == self.blocked:
                raise ConfigurationError(f"goal {goal} lies in the blocked hallway")
            self.goal = goal
        elif self.goal is None:
            raise UsageError("no goal set; pass a cell or 'random' on first reset")

        starts = [c for c in self._free_cells() if c != self.goal]
        self.agent = starts[self.rng.integers(len(starts))]
        self.steps = 0
        self._running = True
        return StepResult(
            self.layout.observation(self.agent),
            0.0,
            False,
            False,
            self.layout.cell_index(self.agent),
        )

    def step(self, action: int) -> StepResult:
        if not self._running:
            raise UsageError("step() before reset() or after the episode ended")
        if action not in ACTIONS:
            raise UsageError(f"action must be in {ACTIONS}, got {action}")

        if self.slip > 0.0 and self.rng.random() < self.slip:
            action = int(self.rng.integers(len(ACTIONS)))
            self.slip_count += 1
        dr, dc = DELTAS[action]
        target = (self.agent[0] + dr, self.agent[1] + dc)
        if self.layout.is_walkable(target) and target != self.blocked:
            self.agent = target

        self.steps += 1
        done = self.agent == self.goal
        reward = self.goal_reward if done else self.step_reward
        truncated = not done and self.steps >= self.step_cap
        if done or truncated:
            self._running = False
        return StepResult(
            self.layout.observation(self.agent),
            reward,
            done,
            truncated,
            self.layout.cell_index(self.agent),
        )
