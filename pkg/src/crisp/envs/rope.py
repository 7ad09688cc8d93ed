"""Chain-of-points rope nudged by fixed-length pokes."""
from __future__ import annotations

import math

import numpy as np

from .. import kernels
from ..core import GoalEnv, InvalidStateError

POKE_LENGTH = 0.08


class RopeEnv(GoalEnv):
    """A rope of ``n_joints`` planar points in the unit square.

    Action ``[x, y, eta]`` in ``[-1, 1]^3`` maps to a poke origin in the
    workspace and a direction ``pi * eta``.  The joint nearest the origin, if
    within ``influence_radius``, moves ``POKE_LENGTH`` along the direction and
    the rest of the chain relaxes toward the link length.  State and goal are
    the flattened joint positions.
    """

    name = "rope"

    def __init__(
        self,
        n_joints: int = 15,
        horizon: int = 25,
        relax_iters: int = 10,
        influence_radius: float | None = None,
        instance_pokes: tuple[int, int] = (2, 6),
    ):
        self.n_joints = n_joints
        self.link = 1.0 / 20.0
        self.relax_iters = relax_iters
        self.influence_radius = 2.0 * self.link if influence_radius is None else influence_radius
        self.instance_pokes = instance_pokes
        self.horizon = horizon
        self.state_dim = self.goal_dim = 2 * n_joints
        self.action_dim = 3
        self.state_low = self.goal_low = np.zeros(self.state_dim)
        self.state_high = self.goal_high = np.ones(self.state_dim)
        super().__init__()
        # success threshold scales with the planar workspace, not the 2J-dim box
        self.delta = 0.1 * math.sqrt(2.0)

    def straight(self, center, angle) -> np.ndarray:
        offs = (np.arange(self.n_joints) - (self.n_joints - 1) / 2.0) * self.link
        d = np.array([math.cos(angle), math.sin(angle)])
        return (np.asarray(center)[None, :] + offs[:, None] * d[None, :]).ravel()

    def poke(self, state, x: float, y: float, eta: float):
        """Apply one poke; returns ``(next_state, touched_joint or -1, clamped)``."""
        clamped = not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0)
        x, y = min(max(x, 0.0), 1.0), min(max(y, 0.0), 1.0)
        joints = np.asarray(state, dtype=np.float64).reshape(self.n_joints, 2)
        d = joints - np.array([x, y])
        dist = np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1])
        k = int(np.argmin(dist))
        if dist[k] > self.influence_radius:
            return joints.ravel().copy(), -1, clamped
        moved = joints.copy()
        moved[k, 0] += POKE_LENGTH * math.cos(eta)
        moved[k, 1] += POKE_LENGTH * math.sin(eta)
        relaxed = kernels.rope_relax(moved, k, self.link, self.relax_iters)
        return relaxed.ravel(), k, clamped

    def action_to_poke(self, action) -> tuple[float, float, float]:
        a = np.asarray(action, dtype=np.float64)
        return 0.5 * (a[0] + 1.0), 0.5 * (a[1] + 1.0), math.pi * a[2]

    def poke_to_action(self, x: float, y: float, eta: float) -> np.ndarray:
        eta = math.atan2(math.sin(eta), math.cos(eta))
        return np.array([2.0 * x - 1.0, 2.0 * y - 1.0, eta / math.pi])

    def sample_instance(self, rng):
        center = rng.uniform(0.4, 0.6, size=2)
        start = self.straight(center, rng.uniform(0.0, math.pi))
        start = self._random_pokes(start, int(rng.integers(0, 3)), rng)
        lo, hi = self.instance_pokes
        goal = self._random_pokes(start, int(rng.integers(lo, hi + 1)), rng)
        return start, goal

    def _random_pokes(self, state, count, rng):
        s = state
        for _ in range(count):
            k = int(rng.integers(self.n_joints))
            jx, jy = s[2 * k], s[2 * k + 1]
            s, _, _ = self.poke(s, jx, jy, rng.uniform(-math.pi, math.pi))
        return s

    def transition(self, states, actions):
        out = np.empty_like(states)
        missed = np.zeros((states.shape[0], 1), dtype=bool)
        for r in range(states.shape[0]):
            x, y, eta = self.action_to_poke(actions[r])
            out[r], k, _ = self.poke(states[r], x, y, eta)
            missed[r, 0] = k < 0
        return out, missed

    def achieved_goal(self, state):
        return np.array(state, dtype=np.float64)

    def batch_achieved_goal(self, states):
        return np.array(states, dtype=np.float64)

    def spacing(self, state) -> np.ndarray:
        j = np.asarray(state).reshape(self.n_joints, 2)
        return np.linalg.norm(np.diff(j, axis=0), axis=1)

    def validate_state(self, state):
        super().validate_state(state)
        s = self.spacing(state)
        if s.min() < 0.5 * self.link - 1e-9 or s.max() > 1.5 * self.link + 1e-9:
            raise InvalidStateError(
                f"link lengths [{s.min():.4f}, {s.max():.4f}] outside [{0.5 * self.link}, {1.5 * self.link}]"
            )

    def infer_action(self, state, next_state):
        a = np.asarray(state).reshape(self.n_joints, 2)
        b = np.asarray(next_state).reshape(self.n_joints, 2)
        k = int(np.argmax(np.linalg.norm(b - a, axis=1)))
        d = b[k] - a[k]
        return self.poke_to_action(a[k, 0], a[k, 1], math.atan2(d[1], d[0]))
