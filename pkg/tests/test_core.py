import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crisp.core import ContractError, batch_sparse_reward, sparse_reward
from crisp.envs import LineEnv, PointEnv


def test_reward_zero_distance():
    assert sparse_reward([0.0, 0.0], [0.0, 0.0], 0.1) == 0.0


def test_reward_far():
    assert sparse_reward([1.0, 0.0], [0.0, 0.0], 0.5) == -1.0


def test_reward_boundary_counts_as_success():
    # 3-4-5 triangle: distance is exactly 0.5
    assert np.linalg.norm([0.3, 0.4]) == 0.5
    assert sparse_reward([0.3, 0.4], [0.0, 0.0], 0.5) == 0.0


def test_reward_rejects_bad_input():
    with pytest.raises(ContractError):
        sparse_reward([0.0], [0.0, 0.0], 0.1)
    with pytest.raises(ContractError):
        sparse_reward([0.0], [0.0], 0.0)


@given(st.lists(st.floats(-10, 10), min_size=4, max_size=4), st.floats(0.01, 5))
def test_batch_reward_matches_scalar(xs, delta):
    a = np.array([xs[:2]])
    g = np.array([xs[2:]])
    assert batch_sparse_reward(a, g, delta)[0] == sparse_reward(a[0], g[0], delta)


def test_delta_is_tenth_of_goal_diameter():
    env = PointEnv(half_width=1.0)
    assert env.delta == pytest.approx(0.1 * np.sqrt(8.0))


def test_step_requires_reset():
    with pytest.raises(ContractError):
        LineEnv().step([0.0])


def test_interaction_counter_and_clock():
    env = LineEnv()
    env.reset(0)
    for _ in range(3):
        env.step([0.5])
    assert env.interactions == 3 and env.t == 3
    env.reset(1)
    assert env.t == 0 and env.interactions == 3


def test_non_finite_and_out_of_range_actions_are_clamped():
    env = PointEnv()
    env.reset_to([0.0, 0.0], [0.5, 0.5])
    out = env.step([np.nan, 5.0])
    assert out.info["clamped"]
    np.testing.assert_allclose(out.next_state, [0.0, 0.1])


def test_wrong_action_dim_is_rejected():
    env = PointEnv()
    env.reset(0)
    with pytest.raises(ContractError):
        env.step([0.0, 0.0, 0.0])
