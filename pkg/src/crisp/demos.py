"""Scripted experts for each environment and the demo dataset format.

Demos carry states only.  The maze expert plans with RRT over the continuous
plane, the block-push expert is a three-phase controller and the rope expert
repeatedly pokes the joint farthest from its goal position.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .envs import BlockPushEnv, MazeEnv, MazeSpec, RopeEnv
from .envs.blockpush import BLOCK, GRIPPER


class PlanningError(RuntimeError):
    """RRT hit its node cap before connecting start and goal."""


class GenerationError(RuntimeError):
    """A scripted expert ran out of horizon without succeeding."""


class DatasetFormatError(ValueError):
    pass


@dataclass
class Trajectory:
    states: np.ndarray
    goal: np.ndarray
    env_id: str = ""

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        self.goal = np.asarray(self.goal, dtype=np.float64)
        if self.states.ndim != 2 or len(self.states) < 2:
            raise ValueError("a trajectory needs at least two states")

    def __len__(self) -> int:
        return len(self.states)


@dataclass
class DemoDataset:
    trajectories: list[Trajectory] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.trajectories)

    def __getitem__(self, i) -> Trajectory:
        return self.trajectories[i]

    def __iter__(self):
        return iter(self.trajectories)


# ------------------------------------------------------------------ RRT


def _grid(maze, cell_size):
    if isinstance(maze, MazeSpec):
        return maze.occupancy(), maze.cell_size
    return np.asarray(maze), cell_size


def shortcut(path: np.ndarray, free) -> np.ndarray:
    """Greedy shortcutting: from each kept point jump to the farthest point visible from it."""
    out = [path[0]]
    i = 0
    while i < len(path) - 1:
        j = len(path) - 1
        while j > i + 1 and not free(path[i], path[j]):
            j -= 1
        out.append(path[j])
        i = j
    return np.array(out)


def densify(path: np.ndarray, max_step: float) -> np.ndarray:
    """Insert evenly spaced points so no consecutive pair is farther apart than ``max_step``."""
    out = [path[0]]
    for a, b in zip(path[:-1], path[1:]):
        n = max(1, math.ceil(float(np.linalg.norm(b - a)) / max_step - 1e-12))
        for k in range(1, n + 1):
            out.append(a + (b - a) * (k / n))
    return np.array(out)


def rrt_plan(
    maze,
    start,
    goal,
    seed: int,
    step: float = 0.25,
    extend: float | None = None,
    goal_bias: float = 0.1,
    node_cap: int = 5000,
    c: int = 15,
    cell_size: float = 1.0,
) -> np.ndarray:
    """Collision-free ``(n, 2)`` position path from ``start`` to ``goal``.

    ``maze`` is a :class:`MazeSpec` or an occupancy grid indexed ``[row, col]``.
    Extension length defaults to ``step * c / 3``.  The raw tree path is
    shortcut and then densified so consecutive points are at most ``step``
    apart.
    """
    start = np.asarray(start, dtype=np.float64)
    goal = np.asarray(goal, dtype=np.float64)
    grid, cell = _grid(maze, cell_size)
    h, w = grid.shape
    occ = grid.ravel().astype(np.float64)

    def free(p, q):
        return bool(kernels.segment_free(occ, w, h, cell, p[0], p[1], q[0], q[1]))

    for p, name in ((start, "start"), (goal, "goal")):
        if not free(p, p):
            raise PlanningError(f"{name} {p} is not in free space")
    if np.array_equal(start, goal):
        return np.stack([start, goal])
    extend = step * c / 3.0 if extend is None else extend
    rng = np.random.default_rng(seed)
    nodes = np.empty((node_cap, 2))
    parent = np.full(node_cap, -1, dtype=np.int64)
    nodes[0] = start
    n = 1
    hi = np.array([w, h], dtype=np.float64) * cell
    found = -1
    if free(start, goal):
        nodes[1] = goal
        parent[1] = 0
        n, found = 2, 1
    while found < 0 and n < node_cap:
        target = goal if rng.random() < goal_bias else rng.uniform(0.0, hi)
        near = int(kernels.nearest_node(nodes, n, target[0], target[1]))
        d = target - nodes[near]
        dist = float(np.linalg.norm(d))
        if dist == 0.0:
            continue
        new = nodes[near] + d * min(1.0, extend / dist)
        if not free(nodes[near], new):
            continue
        nodes[n] = new
        parent[n] = near
        n += 1
        if np.linalg.norm(goal - new) <= extend and free(new, goal) and n < node_cap:
            nodes[n] = goal
            parent[n] = n - 1
            found = n
            n += 1
    if found < 0:
        raise PlanningError(f"no path after {node_cap} nodes")
    chain = []
    k = found
    while k >= 0:
        chain.append(nodes[k])
        k = parent[k]
    path = np.array(chain[::-1])
    return densify(shortcut(path, free), step)


def maze_expert(env: MazeEnv, seed: int, c: int = 15, max_tries: int = 10) -> Trajectory:
    """RRT demonstration for the instance ``env.reset(seed)``; planning failures resample the tree seed."""
    state = env.reset(seed)
    grid = env.grid_of(state)
    for attempt in range(max_tries):
        try:
            path = rrt_plan(grid, state[:2], env.goal, seed * 1000 + attempt, env.step_scale, c=c, cell_size=env.cell)
            break
        except PlanningError:
            continue
    else:
        raise GenerationError(f"RRT failed {max_tries} times for seed {seed}")
    path = _replayable(env, grid, path)
    states = np.stack([env.make_state(p, grid) for p in path])
    return Trajectory(states, env.goal.copy(), env.name)


def _replayable(env: MazeEnv, grid, path: np.ndarray) -> np.ndarray:
    """Make every step reproducible by the env's per-axis dynamics.

    A diagonal step that clips a wall corner is free as a segment but blocked
    when x moves first; such a step is split at the corner ``(x0, y1)``.
    """
    occ = grid.ravel().astype(np.float64)
    out = [path[0]]
    for b in path[1:]:
        a = out[-1]
        if not _replays(env, occ, a, b):
            mid = np.array([a[0], b[1]])
            if not (_replays(env, occ, a, mid) and _replays(env, occ, mid, b)):
                raise GenerationError(f"step {a} -> {b} cannot be replayed")
            out.append(mid)
        out.append(b)
    return np.array(out)


def _replays(env: MazeEnv, occ, a, b) -> bool:
    s = np.concatenate([a, occ])[None, :]
    act = np.clip((b - a) / env.step_scale, -1.0, 1.0)[None, :]
    nxt, _ = env.transition(s, act)
    return bool(np.all(np.abs(nxt[0, :2] - b) <= 1e-12))


# ------------------------------------------------------------------ block push


def scripted_push_expert(env: BlockPushEnv, seed: int | None = None, state=None, goal=None) -> Trajectory:
    """Approach the block with the grip open, close it, carry the block to the goal."""
    if state is None:
        env.reset(seed)
    else:
        env.reset_to(state, goal)
    s = env.state
    states = [s]
    for _ in range(env.horizon):
        if np.linalg.norm(s[BLOCK] - env.goal) <= env.delta:
            break
        rel = s[BLOCK] - s[GRIPPER]
        if np.linalg.norm(rel) > env.contact_radius:
            move, grip = rel / env.step_scale, -1.0
        else:
            move, grip = (env.goal - s[BLOCK]) / env.step_scale, 1.0
        move = move / max(1.0, float(np.max(np.abs(move))))
        s = env.step(np.concatenate([move, [grip]])).next_state
        states.append(s)
    if np.linalg.norm(s[BLOCK] - env.goal) > env.delta:
        raise GenerationError(f"push expert did not reach the goal within {env.horizon} steps")
    if len(states) == 1:
        states.append(states[0])
    return Trajectory(np.stack(states), env.goal.copy(), env.name)


# ------------------------------------------------------------------ rope


def farthest_joint(env: RopeEnv, state, goal) -> int:
    d = np.linalg.norm(np.asarray(state).reshape(-1, 2) - np.asarray(goal).reshape(-1, 2), axis=1)
    return int(np.argmax(d))


def rope_poke_expert(env: RopeEnv, goal_config=None, seed: int | None = None, start=None,
                     max_pokes: int | None = None) -> tuple[Trajectory, bool]:
    """Poke the joint farthest from its goal position toward it until within ``delta``.

    Returns the trajectory and whether it succeeded; a start already at the
    goal gives the start state twice.
    """
    if start is None:
        start = env.reset(seed)
    if goal_config is None:
        goal_config = env.goal
    goal = np.asarray(goal_config, dtype=np.float64)
    max_pokes = env.horizon if max_pokes is None else max_pokes
    s = np.asarray(start, dtype=np.float64)
    states = [s]
    for _ in range(max_pokes):
        if np.linalg.norm(s - goal) <= env.delta:
            break
        m = farthest_joint(env, s, goal)
        sx, sy = s[2 * m], s[2 * m + 1]
        eta = math.atan2(goal[2 * m + 1] - sy, goal[2 * m] - sx)
        s, _, _ = env.poke(s, sx, sy, eta)
        states.append(s)
    ok = bool(np.linalg.norm(s - goal) <= env.delta)
    if len(states) == 1:
        states.append(states[0])
    return Trajectory(np.stack(states), goal, env.name), ok


# ------------------------------------------------------------------ datasets


def generate(env, count: int, seed: int, keep_failures: bool = False, c: int | None = None) -> DemoDataset:
    """``count`` successful demos from consecutive instance seeds starting at ``seed``."""
    trajs = []
    s = seed
    attempts = 0
    while len(trajs) < count:
        attempts += 1
        if attempts > 20 * count + 100:
            raise GenerationError(f"only {len(trajs)} of {count} demos after {attempts} attempts")
        try:
            if isinstance(env, MazeEnv):
                trajs.append(maze_expert(env, s, c or 15))
            elif isinstance(env, BlockPushEnv):
                trajs.append(scripted_push_expert(env, s))
            elif isinstance(env, RopeEnv):
                t, ok = rope_poke_expert(env, seed=s)
                if ok or keep_failures:
                    trajs.append(t)
            else:
                raise ValueError(f"no scripted expert for environment {env.name!r}")
        except GenerationError:
            if keep_failures:
                raise
        s += 1
    meta = {"env": env.name, "generator": f"{env.name}-expert", "seed": seed, "count": count}
    return DemoDataset(trajs, meta)


def save_dataset(ds: DemoDataset, path) -> None:
    if ds.trajectories:
        sd, gd = ds[0].states.shape[1], len(ds[0].goal)
    else:
        sd, gd = int(ds.meta.get("state_dim", 0)), int(ds.meta.get("goal_dim", 0))
    meta = {k: v for k, v in ds.meta.items() if k not in ("state_dim", "goal_dim")}  # those live in the header
    header = {"version": 1, "state_dim": sd, "goal_dim": gd, "count": len(ds), "meta": meta}
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for t in ds:
            # repr round-trips float64 exactly through json
            fh.write(json.dumps({"env": t.env_id, "goal": t.goal.tolist(), "states": t.states.tolist()}) + "\n")


def load_dataset(path) -> DemoDataset:
    with open(path) as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DatasetFormatError(f"{path}:1: missing header")

    def parse(i):
        try:
            return json.loads(lines[i])
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"{path}:{i + 1}: {exc.msg}") from None

    head = parse(0)
    if head.get("version") != 1:
        raise DatasetFormatError(f"{path}:1: unsupported version {head.get('version')!r}")
    sd, gd = head["state_dim"], head["goal_dim"]
    trajs = []
    for i in range(1, len(lines)):
        rec = parse(i)
        t = Trajectory(np.array(rec["states"], dtype=np.float64), np.array(rec["goal"], dtype=np.float64), rec["env"])
        if t.states.shape[1] != sd or len(t.goal) != gd:
            raise DatasetFormatError(f"{path}:{i + 1}: dimension mismatch with header ({sd}, {gd})")
        trajs.append(t)
    if len(trajs) != head["count"]:
        raise DatasetFormatError(f"{path}:{len(lines) + 1}: header promises {head['count']} trajectories, found {len(trajs)}")
    meta = dict(head.get("meta", {}))
    meta.setdefault("state_dim", sd)
    meta.setdefault("goal_dim", gd)
    return DemoDataset(trajs, meta)
