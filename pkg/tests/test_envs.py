import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crisp.core import ConfigError, InvalidStateError
from crisp.envs import (
    POKE_LENGTH,
    BlockPushEnv,
    MazeEnv,
    MazeSpec,
    PointEnv,
    RopeEnv,
    free_components,
    generate_maze,
    load_mazes,
    make_env,
    save_mazes,
)
from crisp.envs.blockpush import BLOCK, GRIPPER, REL

ENVS = ["maze", "point", "blockpush", "rope", "line"]


@pytest.mark.parametrize("name", ENVS)
def test_reset_is_deterministic_and_in_bounds(name):
    env = make_env(name)
    a = env.reset(7)
    b = env.reset(7)
    np.testing.assert_array_equal(a, b)
    for seed in range(20):
        s = env.reset(seed)
        env.validate_state(s)
        assert np.all(s >= env.state_low - 1e-9) and np.all(s <= env.state_high + 1e-9)


@pytest.mark.parametrize("name", ENVS)
def test_reset_to_round_trip_and_zero_action(name):
    env = make_env(name)
    s = env.reset(3)
    np.testing.assert_array_equal(env.reset_to(s), s)
    np.testing.assert_array_equal(env.state, s)
    if name == "rope":
        return  # rope has no zero action: a poke always pushes
    zero = np.zeros(env.action_dim)
    if name == "blockpush":
        zero[2] = -1.0
    nxt = env.step(zero).next_state
    if name == "blockpush":
        np.testing.assert_array_equal(nxt[:6], s[:6])
    else:
        np.testing.assert_array_equal(nxt, s)


def test_unknown_env():
    with pytest.raises(KeyError):
        make_env("nope")


# ------------------------------------------------------------------ maze


def test_maze_start_not_in_wall():
    env = MazeEnv(specs=[generate_maze(0)])
    s = env.reset(0)
    grid = env.grid_of(s)
    assert grid[int(s[1]), int(s[0])] == 0


def test_maze_wall_index_range():
    seen_c, seen_r = set(), set()
    for seed in range(300):
        m = generate_maze(seed)
        seen_c.add(m.wall_col)
        seen_r.add(m.wall_row)
    assert seen_c <= set(range(2, 7)) and seen_r <= set(range(2, 7))
    assert seen_c == {2, 3, 4, 5} and seen_r == {2, 3, 4, 5}


def test_maze_deterministic_and_json_round_trip(tmp_path):
    assert generate_maze(11) == generate_maze(11)
    specs = [generate_maze(i) for i in range(5)]
    save_mazes(specs, tmp_path / "m.json")
    assert load_mazes(tmp_path / "m.json") == specs
    d = specs[0].to_json()
    assert set(d) >= {"W", "H", "wall_col", "wall_row", "gates"}
    assert MazeSpec.from_json(d) == specs[0]


def test_maze_too_small():
    with pytest.raises(ConfigError):
        generate_maze(0, 4, 8)


@given(st.integers(0, 10**6))
def test_maze_single_component(seed):
    assert free_components(generate_maze(seed).occupancy()) == 1


def _maze_state(env, spec, x, y):
    return env.make_state([x, y], spec)


def test_maze_free_move_and_wall_slide():
    spec = MazeSpec(8, 8, 4, 4, (2, 6, 2, 6))
    env = MazeEnv(specs=[spec])
    env.reset_to(_maze_state(env, spec, 2.5, 2.5), [6.5, 6.5])
    nxt = env.step([1.0, -0.4]).next_state
    np.testing.assert_allclose(nxt[:2], [2.75, 2.4], atol=0)
    # the vertical wall is column 4; push +x into it from x=3.9 while moving in y
    # (row 2 holds the gate, so use row 1)
    env.reset_to(_maze_state(env, spec, 3.9, 1.25), [6.5, 6.5])
    nxt = env.step([1.0, 1.0]).next_state
    assert nxt[0] == 3.9 and nxt[1] == 1.5
    assert np.array_equal(nxt[2:], spec.occupancy().ravel())


def test_maze_reset_to_wall_rejected():
    spec = MazeSpec(8, 8, 4, 4, (2, 6, 2, 6))
    env = MazeEnv(specs=[spec])
    with pytest.raises(InvalidStateError):
        env.reset_to(_maze_state(env, spec, 4.5, 1.5))


@given(st.integers(0, 1000), st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=1, max_size=60))
def test_maze_collision_soundness(seed, actions):
    env = MazeEnv(specs=[generate_maze(seed)])
    s = env.reset(seed)
    grid = env.grid_of(s)
    for a in actions:
        s = env.step(np.array(a)).next_state
        assert grid[int(math.floor(s[1])), int(math.floor(s[0]))] == 0


# ------------------------------------------------------------------ point


def test_point_kinematics():
    env = PointEnv(step_scale=0.1)
    env.reset_to([0.0, 0.0], [0.5, 0.5])
    np.testing.assert_allclose(env.step([1.0, 0.0]).next_state, [0.1, 0.0], atol=0)


# ------------------------------------------------------------------ block push


def test_blockpush_far_block_is_stationary():
    env = BlockPushEnv()
    s0 = env.make_state([0.1, 0.1], [0.8, 0.8])
    env.reset_to(s0, [0.5, 0.5])
    for a in ([1, 0, 1], [0, 1, 1], [-1, -1, -1]):
        s = env.step(np.array(a, dtype=float)).next_state
        np.testing.assert_array_equal(s[BLOCK], [0.8, 0.8])


def test_blockpush_attached_block_co_moves():
    env = BlockPushEnv(step_scale=0.05)
    s0 = env.make_state([0.5, 0.5], [0.52, 0.5])
    env.reset_to(s0, [0.9, 0.9])
    s = env.step(np.array([1.0, 0.4, 1.0])).next_state
    d = s[GRIPPER] - s0[GRIPPER]
    np.testing.assert_allclose(d, [0.05, 0.02], atol=1e-15)
    np.testing.assert_allclose(s[BLOCK] - s0[BLOCK], d, atol=1e-15)


@given(st.integers(0, 500), st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)), max_size=30))
def test_blockpush_rel_invariant(seed, actions):
    env = BlockPushEnv()
    s = env.reset(seed)
    for a in actions:
        s = env.step(np.array(a)).next_state
        np.testing.assert_allclose(s[REL], s[BLOCK] - s[GRIPPER], atol=1e-12)


# ------------------------------------------------------------------ rope


def test_rope_far_poke_is_noop():
    env = RopeEnv()
    s = env.straight([0.5, 0.5], 0.0)
    nxt, k, _ = env.poke(s, 0.5, 0.05, math.pi / 2)
    assert k == -1
    np.testing.assert_array_equal(nxt, s)


def test_rope_middle_poke_is_symmetric():
    env = RopeEnv()
    s = env.straight([0.5, 0.5], 0.0)
    mid = env.n_joints // 2
    nxt, k, _ = env.poke(s, s[2 * mid], s[2 * mid + 1], math.pi / 2)
    assert k == mid
    j = nxt.reshape(-1, 2)
    assert j[mid, 1] > 0.5
    for d in range(1, mid + 1):
        assert j[mid - d, 1] == pytest.approx(j[mid + d, 1], abs=1e-12)
        assert 0.5 - j[mid - d, 0] == pytest.approx(j[mid + d, 0] - 0.5, abs=1e-12)


def test_rope_mirror_symmetry():
    env = RopeEnv()
    s = env.straight([0.5, 0.5], 0.3)
    s, _, _ = env.poke(s, s[6], s[7], 1.0)
    mirror = s.reshape(-1, 2).copy()
    mirror[:, 0] = 1.0 - mirror[:, 0]
    m = mirror.ravel()
    a, _, _ = env.poke(s, s[10], s[11], 0.4)
    b, _, _ = env.poke(m, m[10], m[11], math.pi - 0.4)
    a2 = a.reshape(-1, 2)
    a2[:, 0] = 1.0 - a2[:, 0]
    np.testing.assert_allclose(a2.ravel(), b, atol=1e-12)


@given(st.integers(0, 10**5), st.lists(st.tuples(st.integers(0, 14), st.floats(-math.pi, math.pi)), max_size=25))
def test_rope_link_bounds_hold(seed, pokes):
    env = RopeEnv()
    s = env.reset(seed)
    for k, eta in pokes:
        s, _, _ = env.poke(s, s[2 * k], s[2 * k + 1], eta)
        sp = env.spacing(s)
        assert sp.min() >= 0.5 * env.link - 1e-9 and sp.max() <= 1.5 * env.link + 1e-9


def test_rope_poke_length_and_clamp_flag():
    env = RopeEnv()
    s = env.straight([0.5, 0.5], 0.0)
    _, _, clamped = env.poke(s, 1.5, 0.5, 0.0)
    assert clamped
    assert POKE_LENGTH == 0.08
    assert env.delta == pytest.approx(0.1 * math.sqrt(2))
