"""Planar pick-and-carry: move a block to a goal with a point gripper."""
from __future__ import annotations

import numpy as np

from ..core import GoalEnv, InvalidStateError

# state layout
GRIPPER = slice(0, 2)
BLOCK = slice(2, 4)
REL = slice(4, 6)
VEL = slice(6, 10)


class BlockPushEnv(GoalEnv):
    """Gripper at ``[0, 1]^2`` carries the block while the grip action is positive
    and the block lies within ``contact_radius``.

    State ``[gripper(2), block(2), block - gripper(2), gripper vel(2), block vel(2)]``;
    action ``[dx, dy, grip]``; goal is the block position.
    """

    name = "blockpush"

    def __init__(self, step_scale: float = 0.05, horizon: int = 50, contact_radius: float | None = None):
        self.step_scale = step_scale
        self.horizon = horizon
        self.contact_radius = 1.5 * step_scale if contact_radius is None else contact_radius
        self.state_dim, self.goal_dim, self.action_dim = 10, 2, 3
        self.state_low = np.array([0, 0, 0, 0, -1, -1] + [-step_scale] * 4, dtype=np.float64)
        self.state_high = np.array([1, 1, 1, 1, 1, 1] + [step_scale] * 4, dtype=np.float64)
        self.goal_low = np.zeros(2)
        self.goal_high = np.ones(2)
        super().__init__()

    @staticmethod
    def make_state(gripper, block, gripper_vel=(0.0, 0.0), block_vel=(0.0, 0.0)) -> np.ndarray:
        g = np.asarray(gripper, dtype=np.float64)
        b = np.asarray(block, dtype=np.float64)
        return np.concatenate([g, b, b - g, gripper_vel, block_vel]).astype(np.float64)

    def sample_instance(self, rng):
        gripper = rng.uniform(0.1, 0.9, size=2)
        block = rng.uniform(0.1, 0.9, size=2)
        goal = rng.uniform(0.1, 0.9, size=2)
        return self.make_state(gripper, block), goal

    def transition(self, states, actions):
        g = states[:, GRIPPER]
        b = states[:, BLOCK]
        attached = (actions[:, 2] > 0.0) & (np.linalg.norm(b - g, axis=1) <= self.contact_radius)
        moved = g + self.step_scale * actions[:, :2]
        ng = np.clip(moved, 0.0, 1.0)
        disp = ng - g
        nb = np.where(attached[:, None], b + disp, b)
        nb = np.clip(nb, 0.0, 1.0)
        out = np.concatenate([ng, nb, nb - ng, disp, nb - b], axis=1)
        return out, ng != moved

    def achieved_goal(self, state):
        return np.array(state[BLOCK], dtype=np.float64)

    def batch_achieved_goal(self, states):
        return np.array(states[:, BLOCK], dtype=np.float64)

    def validate_state(self, state):
        super().validate_state(state)
        for name, sl in (("gripper", GRIPPER), ("block", BLOCK)):
            if np.any(state[sl] < 0.0) or np.any(state[sl] > 1.0):
                raise InvalidStateError(f"{name} position {state[sl]} outside [0, 1]^2")
        if np.max(np.abs(state[REL] - (state[BLOCK] - state[GRIPPER]))) > 1e-9:
            raise InvalidStateError("block_rel must equal block - gripper")

    def action_displacement(self, actions):
        return self.step_scale * np.asarray(actions)[..., :2]

    def infer_action(self, state, next_state):
        move = np.clip((next_state[GRIPPER] - state[GRIPPER]) / self.step_scale, -1.0, 1.0)
        carried = np.linalg.norm(next_state[BLOCK] - state[BLOCK]) > 0.0
        return np.concatenate([move, [1.0 if carried else -1.0]])
