"""Random four-room maze navigation on a continuous 2-D plane."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import asdict, dataclass

import numpy as np

from .. import kernels
from ..core import ConfigError, GoalEnv, InvalidStateError


@dataclass(frozen=True)
class MazeSpec:
    """A four-room maze on a ``width x height`` cell grid with a solid border.

    ``gates`` holds, in order: the column of the opening in the left and right
    halves of the horizontal wall, then the row of the opening in the lower and
    upper halves of the vertical wall.
    """

    width: int
    height: int
    wall_col: int
    wall_row: int
    gates: tuple[int, int, int, int]
    cell_size: float = 1.0

    def occupancy(self) -> np.ndarray:
        """``(height, width)`` uint8 grid, 1 for wall cells, indexed ``[row, col]``."""
        grid = np.zeros((self.height, self.width), dtype=np.uint8)
        grid[0, :] = grid[-1, :] = 1
        grid[:, 0] = grid[:, -1] = 1
        grid[self.wall_row, :] = 1
        grid[:, self.wall_col] = 1
        g_left, g_right, g_low, g_high = self.gates
        grid[self.wall_row, g_left] = 0
        grid[self.wall_row, g_right] = 0
        grid[g_low, self.wall_col] = 0
        grid[g_high, self.wall_col] = 0
        return grid

    def room_of(self, cx: int, cy: int) -> int:
        return int(cx > self.wall_col) + 2 * int(cy > self.wall_row)

    def room_cells(self, room: int) -> list[tuple[int, int]]:
        xs = range(1, self.wall_col) if room % 2 == 0 else range(self.wall_col + 1, self.width - 1)
        ys = range(1, self.wall_row) if room < 2 else range(self.wall_row + 1, self.height - 1)
        return [(x, y) for y in ys for x in xs]

    def to_json(self) -> dict:
        d = asdict(self)
        return {
            "W": d["width"],
            "H": d["height"],
            "wall_col": d["wall_col"],
            "wall_row": d["wall_row"],
            "gates": list(d["gates"]),
            "cell_size": d["cell_size"],
        }

    @classmethod
    def from_json(cls, d: dict) -> "MazeSpec":
        return cls(
            width=int(d["W"]),
            height=int(d["H"]),
            wall_col=int(d["wall_col"]),
            wall_row=int(d["wall_row"]),
            gates=tuple(int(g) for g in d["gates"]),
            cell_size=float(d.get("cell_size", 1.0)),
        )


def generate_maze(seed: int, width: int = 8, height: int = 8, cell_size: float = 1.0) -> MazeSpec:
    """Sample wall and gate positions.

    Wall indices are drawn from the open interior ranges ``2..width-3`` and
    ``2..height-3`` so every room keeps at least one free column and row; each
    gate is drawn from the free stretch of its wall segment.
    """
    if width < 5 or height < 5:
        raise ConfigError(f"maze needs width, height >= 5, got {width}x{height}")
    rng = np.random.default_rng(seed)
    wall_col = int(rng.integers(2, width - 2))
    wall_row = int(rng.integers(2, height - 2))
    gates = (
        int(rng.integers(1, wall_col)),
        int(rng.integers(wall_col + 1, width - 1)),
        int(rng.integers(1, wall_row)),
        int(rng.integers(wall_row + 1, height - 1)),
    )
    return MazeSpec(width, height, wall_col, wall_row, gates, cell_size)


def open_room(width: int, height: int) -> np.ndarray:
    """Occupancy grid with only the border walls."""
    grid = np.zeros((height, width), dtype=np.uint8)
    grid[0, :] = grid[-1, :] = 1
    grid[:, 0] = grid[:, -1] = 1
    return grid


def free_components(grid: np.ndarray) -> int:
    """Number of 4-connected components of free cells (flood fill)."""
    h, w = grid.shape
    seen = np.zeros_like(grid, dtype=bool)
    count = 0
    for y in range(h):
        for x in range(w):
            if grid[y, x] or seen[y, x]:
                continue
            count += 1
            queue = deque([(x, y)])
            seen[y, x] = True
            while queue:
                cx, cy = queue.popleft()
                for nx, ny in ((cx + 1, cy), (cx - 1, cy), (cx, cy + 1), (cx, cy - 1)):
                    if 0 <= nx < w and 0 <= ny < h and not grid[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        queue.append((nx, ny))
    return count


def save_mazes(specs, path) -> None:
    with open(path, "w") as fh:
        json.dump([s.to_json() for s in specs], fh)


def load_mazes(path) -> list[MazeSpec]:
    with open(path) as fh:
        return [MazeSpec.from_json(d) for d in json.load(fh)]


class MazeEnv(GoalEnv):
    """Point agent in a random four-room maze.

    State is ``[x, y, occupancy...]`` so that a state alone determines the
    dynamics; the goal is an ``(x, y)`` position.  Episodes start in one room
    and, by default, target the diagonally opposite room.
    """

    name = "maze"

    def __init__(
        self,
        specs: list[MazeSpec] | None = None,
        width: int = 8,
        height: int = 8,
        cell_size: float = 1.0,
        step_scale: float = 0.25,
        horizon: int = 225,
        goal_room: str = "opposite",
    ):
        if specs:
            width, height, cell_size = specs[0].width, specs[0].height, specs[0].cell_size
        if width < 5 or height < 5:
            raise ConfigError(f"maze needs width, height >= 5, got {width}x{height}")
        if goal_room not in ("opposite", "any"):
            raise ConfigError(f"unknown goal_room {goal_room!r}")
        self.specs = list(specs) if specs else None
        self.width, self.height, self.cell = width, height, cell_size
        self.step_scale = step_scale
        self.horizon = horizon
        self.goal_room = goal_room
        self.state_dim = 2 + width * height
        self.goal_dim = 2
        self.action_dim = 2
        self.state_low = np.zeros(self.state_dim)
        self.state_high = np.ones(self.state_dim)
        self.state_high[:2] = [width * cell_size, height * cell_size]
        self.goal_low = np.array([cell_size, cell_size])
        self.goal_high = np.array([(width - 1) * cell_size, (height - 1) * cell_size])
        super().__init__()

    def make_state(self, pos, spec_or_grid) -> np.ndarray:
        grid = spec_or_grid.occupancy() if isinstance(spec_or_grid, MazeSpec) else spec_or_grid
        return np.concatenate([np.asarray(pos, dtype=np.float64), grid.ravel().astype(np.float64)])

    def grid_of(self, state) -> np.ndarray:
        return np.asarray(state[2:]).reshape(self.height, self.width)

    def sample_instance(self, rng):
        if self.specs:
            spec = self.specs[int(rng.integers(len(self.specs)))]
        else:
            spec = generate_maze(int(rng.integers(2**31 - 1)), self.width, self.height, self.cell)
        start_room = int(rng.integers(4))
        goal_room = 3 - start_room if self.goal_room == "opposite" else int(rng.integers(4))
        start = self._sample_in_room(spec, start_room, rng)
        goal = self._sample_in_room(spec, goal_room, rng)
        return self.make_state(start, spec), goal

    def _sample_in_room(self, spec, room, rng):
        cells = spec.room_cells(room)
        cx, cy = cells[int(rng.integers(len(cells)))]
        off = rng.uniform(0.2, 0.8, size=2)
        return (np.array([cx, cy]) + off) * self.cell

    def transition(self, states, actions):
        return kernels.maze_transition(
            np.ascontiguousarray(states, dtype=np.float64),
            np.ascontiguousarray(actions, dtype=np.float64),
            self.step_scale,
            self.width,
            self.height,
            self.cell,
        )

    def achieved_goal(self, state):
        return np.array(state[:2], dtype=np.float64)

    def batch_achieved_goal(self, states):
        return np.array(states[:, :2], dtype=np.float64)

    def validate_state(self, state):
        super().validate_state(state)
        occ = state[2:]
        if not np.all((occ == 0.0) | (occ == 1.0)):
            raise InvalidStateError("occupancy entries must be 0 or 1")
        x, y = state[0], state[1]
        if not (0.0 <= x < self.width * self.cell):
            raise InvalidStateError(f"x={x} outside [0, {self.width * self.cell})")
        if not (0.0 <= y < self.height * self.cell):
            raise InvalidStateError(f"y={y} outside [0, {self.height * self.cell})")
        cx, cy = int(np.floor(x / self.cell)), int(np.floor(y / self.cell))
        if occ[cy * self.width + cx] > 0.5:
            raise InvalidStateError(f"position ({x}, {y}) lies inside wall cell ({cx}, {cy})")

    def action_displacement(self, actions):
        return self.step_scale * np.asarray(actions)

    def infer_action(self, state, next_state):
        return np.clip((next_state[:2] - state[:2]) / self.step_scale, -1.0, 1.0)
