import json
import math

import numpy as np
import pytest

from crisp.demos import (
    DatasetFormatError,
    DemoDataset,
    GenerationError,
    PlanningError,
    Trajectory,
    farthest_joint,
    generate,
    load_dataset,
    rope_poke_expert,
    rrt_plan,
    save_dataset,
    scripted_push_expert,
)
from crisp import kernels
from crisp.envs import POKE_LENGTH, BlockPushEnv, MazeEnv, RopeEnv, generate_maze, open_room
from crisp.envs.blockpush import BLOCK, GRIPPER


def _free(grid):
    occ = grid.ravel().astype(float)
    h, w = grid.shape
    return lambda p, q: bool(kernels.segment_free(occ, w, h, 1.0, p[0], p[1], q[0], q[1]))


def test_rrt_start_equals_goal():
    path = rrt_plan(generate_maze(0), [1.5, 1.5], [1.5, 1.5], seed=0)
    np.testing.assert_array_equal(path, [[1.5, 1.5], [1.5, 1.5]])


def test_rrt_open_room_path_is_near_straight():
    grid = open_room(8, 8)
    rng = np.random.default_rng(0)
    for seed in range(100):
        a, b = rng.uniform(1.05, 6.95, (2, 2))
        path = rrt_plan(grid, a, b, seed)
        length = np.sum(np.linalg.norm(np.diff(path, axis=0), axis=1))
        assert length <= 1.5 * np.linalg.norm(b - a) + 1e-9


def test_rrt_paths_are_collision_free_and_dense():
    for seed in range(30):
        env = MazeEnv(specs=[generate_maze(seed)])
        s = env.reset(seed)
        grid = env.grid_of(s)
        path = rrt_plan(grid, s[:2], env.goal, seed)
        free = _free(grid)
        assert np.linalg.norm(path[-1] - env.goal) <= env.delta
        for p, q in zip(path[:-1], path[1:]):
            assert free(p, q)
            assert np.linalg.norm(q - p) <= 0.25 + 1e-12


def test_rrt_rejects_start_in_wall_and_node_cap():
    spec = generate_maze(0)
    with pytest.raises(PlanningError):
        rrt_plan(spec, [0.5, 0.5], [1.5, 1.5], seed=0)
    grid = open_room(8, 8)
    grid[:, 4] = 1
    with pytest.raises(PlanningError):
        rrt_plan(grid, [1.5, 1.5], [6.5, 1.5], seed=0, node_cap=200)


def test_maze_demos_feasible():
    env = MazeEnv(specs=[generate_maze(i) for i in range(5)])
    ds = generate(env, 10, seed=0)
    for t in ds:
        steps = np.abs(np.diff(t.states[:, :2], axis=0))
        assert steps.max() <= env.step_scale + 1e-12
        assert np.linalg.norm(t.states[-1, :2] - t.goal) <= env.delta
        # every state pair is reproduced by the environment from its inferred action
        for a, b in zip(t.states[:-1], t.states[1:]):
            env.reset_to(a, t.goal)
            np.testing.assert_allclose(env.step(env.infer_action(a, b)).next_state, b, atol=1e-12)


def test_push_expert_block_at_goal():
    env = BlockPushEnv()
    s = env.make_state([0.2, 0.2], [0.6, 0.6])
    t = scripted_push_expert(env, state=s, goal=[0.6, 0.6])
    assert len(t) == 2
    np.testing.assert_array_equal(t.states[0], t.states[1])


def test_push_expert_succeeds_and_approach_is_monotone():
    env = BlockPushEnv()
    for seed in range(20):
        t = scripted_push_expert(env, seed)
        assert np.linalg.norm(t.states[-1][BLOCK] - t.goal) <= env.delta
        d = np.linalg.norm(t.states[:, BLOCK] - t.states[:, GRIPPER], axis=1)
        k = int(np.argmax(d <= env.contact_radius)) if np.any(d <= env.contact_radius) else len(d)
        assert np.all(np.diff(d[: k + 1]) <= 1e-12)


def test_push_expert_horizon_failure():
    env = BlockPushEnv(horizon=2)
    s = env.make_state([0.1, 0.1], [0.9, 0.9])
    with pytest.raises(GenerationError):
        scripted_push_expert(env, state=s, goal=[0.1, 0.9])


def test_rope_expert_start_equals_goal():
    env = RopeEnv()
    s = env.straight([0.5, 0.5], 0.0)
    t, ok = rope_poke_expert(env, goal_config=s, start=s)
    assert ok and len(t) == 2
    np.testing.assert_array_equal(t.states[0], t.states[1])


def test_rope_expert_first_poke_targets_displaced_joint():
    env = RopeEnv()
    goal = env.straight([0.5, 0.5], 0.0)
    start = goal.copy()
    start[2 * 3 + 1] += 0.2
    assert farthest_joint(env, start, goal) == 3
    t, _ = rope_poke_expert(env, goal_config=goal, start=start, max_pokes=1)
    # the poked joint is pinned during relaxation, so it moves exactly one poke toward its goal
    d = (t.states[1] - t.states[0]).reshape(-1, 2)[3]
    np.testing.assert_allclose(d, [0.0, -POKE_LENGTH], atol=1e-12)


def test_rope_expert_states_are_valid():
    env = RopeEnv()
    for seed in range(5):
        t, _ = rope_poke_expert(env, seed=seed)
        for s in t.states:
            env.validate_state(s)
        joint_moves = np.linalg.norm(np.diff(t.states, axis=0).reshape(len(t) - 1, -1, 2), axis=2)
        assert joint_moves.max() <= 2 * POKE_LENGTH


def test_trajectory_needs_two_states():
    with pytest.raises(ValueError):
        Trajectory(np.zeros((1, 2)), np.zeros(2))


def test_dataset_round_trip_exact(tmp_path):
    env = MazeEnv(specs=[generate_maze(3)])
    ds = generate(env, 3, seed=5)
    save_dataset(ds, tmp_path / "d.jsonl")
    back = load_dataset(tmp_path / "d.jsonl")
    assert len(back) == 3
    for a, b in zip(ds, back):
        assert np.array_equal(a.states, b.states) and np.array_equal(a.goal, b.goal)
    head = json.loads((tmp_path / "d.jsonl").read_text().splitlines()[0])
    assert head["version"] == 1 and head["count"] == 3 and head["state_dim"] == 66 and head["goal_dim"] == 2
    save_dataset(back, tmp_path / "d2.jsonl")
    assert (tmp_path / "d2.jsonl").read_bytes() == (tmp_path / "d.jsonl").read_bytes()


def test_dataset_truncated_and_empty(tmp_path):
    env = RopeEnv()
    ds = generate(env, 2, seed=0)
    p = tmp_path / "d.jsonl"
    save_dataset(ds, p)
    text = p.read_text()
    p.write_text(text[: len(text) - 40])
    with pytest.raises(DatasetFormatError, match=r":3:"):
        load_dataset(p)
    save_dataset(DemoDataset([], {"state_dim": 4, "goal_dim": 2}), p)
    empty = load_dataset(p)
    assert len(empty) == 0


def test_dataset_version_and_dimension_errors(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text(json.dumps({"version": 2, "state_dim": 1, "goal_dim": 1, "count": 0}) + "\n")
    with pytest.raises(DatasetFormatError, match="version"):
        load_dataset(p)
    p.write_text(json.dumps({"version": 1, "state_dim": 3, "goal_dim": 1, "count": 1}) + "\n"
                 + json.dumps({"env": "x", "goal": [0.0], "states": [[0.0, 0.0], [1.0, 1.0]]}) + "\n")
    with pytest.raises(DatasetFormatError, match=":2:"):
        load_dataset(p)
