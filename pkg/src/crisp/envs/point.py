"""Obstacle-free point-goal task and a 1-D line used for analytic checks."""
from __future__ import annotations

import numpy as np

from ..core import GoalEnv, InvalidStateError


class PointEnv(GoalEnv):
    """Point agent in the square ``[-half_width, half_width]^2``; state equals the goal projection."""

    name = "point"

    def __init__(self, half_width: float = 1.0, step_scale: float = 0.1, horizon: int = 50):
        self.half_width = half_width
        self.step_scale = step_scale
        self.horizon = horizon
        self.state_dim = self.goal_dim = self.action_dim = 2
        self.state_low = self.goal_low = np.full(2, -half_width)
        self.state_high = self.goal_high = np.full(2, half_width)
        super().__init__()

    def sample_instance(self, rng):
        start = rng.uniform(-self.half_width, self.half_width, size=2)
        goal = rng.uniform(-self.half_width, self.half_width, size=2)
        return start, goal

    def transition(self, states, actions):
        moved = states + self.step_scale * actions
        out = np.clip(moved, -self.half_width, self.half_width)
        return out, out != moved

    def achieved_goal(self, state):
        return np.array(state, dtype=np.float64)

    def batch_achieved_goal(self, states):
        return np.array(states, dtype=np.float64)

    def validate_state(self, state):
        super().validate_state(state)
        if np.any(np.abs(state) > self.half_width):
            raise InvalidStateError(f"state {state} outside [-{self.half_width}, {self.half_width}]^2")

    def action_displacement(self, actions):
        return self.step_scale * np.asarray(actions)

    def infer_action(self, state, next_state):
        return np.clip((next_state - state) / self.step_scale, -1.0, 1.0)


class LineEnv(GoalEnv):
    """1-D point moving ``step_scale * a`` per step on ``[low, high]``."""

    name = "line"

    def __init__(self, step_scale: float = 1.0, low: float = -100.0, high: float = 100.0, horizon: int = 100):
        self.step_scale = step_scale
        self.horizon = horizon
        self.state_dim = self.goal_dim = self.action_dim = 1
        self.state_low = self.goal_low = np.array([low])
        self.state_high = self.goal_high = np.array([high])
        super().__init__()

    def sample_instance(self, rng):
        return np.zeros(1), rng.uniform(self.goal_low, self.goal_high)

    def transition(self, states, actions):
        moved = states + self.step_scale * actions
        out = np.clip(moved, self.state_low, self.state_high)
        return out, out != moved

    def achieved_goal(self, state):
        return np.array(state, dtype=np.float64)

    def batch_achieved_goal(self, states):
        return np.array(states, dtype=np.float64)

    def validate_state(self, state):
        super().validate_state(state)
        if not (self.state_low[0] <= state[0] <= self.state_high[0]):
            raise InvalidStateError(f"x={state[0]} outside [{self.state_low[0]}, {self.state_high[0]}]")

    def action_displacement(self, actions):
        return self.step_scale * np.asarray(actions)

    def infer_action(self, state, next_state):
        return np.clip((next_state - state) / self.step_scale, -1.0, 1.0)
