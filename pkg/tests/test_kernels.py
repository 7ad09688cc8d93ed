import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crisp import kernels
from crisp._accel import HAS_NUMBA
from crisp.envs import generate_maze

needs_numba = pytest.mark.skipif(not HAS_NUMBA, reason="numba path disabled")


@needs_numba
@given(st.integers(0, 10**5), st.integers(1, 50), st.floats(0.05, 1.0))
def test_maze_transition_paths_agree(seed, n, step):
    rng = np.random.default_rng(seed)
    spec = generate_maze(seed)
    occ = spec.occupancy()
    free = np.argwhere(occ == 0)
    cells = free[rng.integers(len(free), size=n)]
    pos = cells[:, ::-1] + rng.uniform(0.0, 0.999, (n, 2))
    states = np.concatenate([pos, np.tile(occ.ravel().astype(float), (n, 1))], axis=1)
    actions = rng.uniform(-1, 1, (n, 2))
    a, ba = kernels.maze_transition_nb(states, actions, step, 8, 8, 1.0)
    b, bb = kernels.maze_transition_np(states, actions, step, 8, 8, 1.0)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(ba, bb)


@needs_numba
@given(st.integers(0, 10**5), st.integers(-1, 11), st.integers(0, 20))
def test_rope_relax_paths_agree(seed, pinned, iters):
    rng = np.random.default_rng(seed)
    joints = np.cumsum(rng.normal(0.0, 0.05, (12, 2)), axis=0) + 0.5
    a = kernels.rope_relax_nb(joints, pinned, 0.05, iters)
    b = kernels.rope_relax_np(joints, pinned, 0.05, iters)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


@needs_numba
@given(st.integers(0, 10**5), st.lists(st.floats(0.0, 7.999), min_size=4, max_size=4))
def test_segment_free_paths_agree(seed, pts):
    occ = generate_maze(seed).occupancy().ravel().astype(float)
    assert bool(kernels.segment_free_nb(occ, 8, 8, 1.0, *pts)) == bool(kernels.segment_free_np(occ, 8, 8, 1.0, *pts))


@needs_numba
@given(st.integers(0, 10**5), st.integers(1, 300))
def test_nearest_node_paths_agree(seed, n):
    rng = np.random.default_rng(seed)
    nodes = rng.uniform(0, 8, (400, 2))
    px, py = rng.uniform(0, 8, 2)
    assert int(kernels.nearest_node_nb(nodes, n, px, py)) == int(kernels.nearest_node_np(nodes, n, px, py))


def test_segment_free_oracle():
    occ = np.zeros((8, 8))
    occ[:, 4] = 1
    flat = occ.ravel()
    for f in (kernels.segment_free_nb, kernels.segment_free_np):
        assert f(flat, 8, 8, 1.0, 1.5, 1.5, 3.5, 6.5)
        assert not f(flat, 8, 8, 1.0, 1.5, 1.5, 5.5, 1.5)
        # ending just inside the wall column
        assert not f(flat, 8, 8, 1.0, 3.9, 0.5, 4.1, 0.6)


def test_fallback_env_var_selects_numpy():
    env = dict(os.environ, CRISP_NO_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", "from crisp import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
