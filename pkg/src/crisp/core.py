"""Goal-conditioned environment contract and sparse rewards."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ContractError(ValueError):
    """A caller broke a documented precondition (shapes, ranges)."""


class InvalidStateError(ContractError):
    """``reset_to`` was handed a state the environment cannot be in."""


class ConfigError(ValueError):
    """An environment or run was configured with impossible parameters."""


def sparse_reward(achieved, goal, delta: float) -> float:
    """0 when ``achieved`` lies within ``delta`` of ``goal`` (boundary included), else -1."""
    if not delta > 0:
        raise ContractError(f"delta must be positive, got {delta}")
    a = np.asarray(achieved, dtype=np.float64)
    g = np.asarray(goal, dtype=np.float64)
    if a.shape != g.shape:
        raise ContractError(f"dimension mismatch: achieved {a.shape} vs goal {g.shape}")
    return 0.0 if float(np.linalg.norm(a - g)) <= delta else -1.0


def batch_sparse_reward(achieved: np.ndarray, goal: np.ndarray, delta: float) -> np.ndarray:
    """Row-wise :func:`sparse_reward` for ``(n, d)`` arrays."""
    if achieved.shape != goal.shape:
        raise ContractError(f"dimension mismatch: {achieved.shape} vs {goal.shape}")
    dist = np.linalg.norm(achieved - goal, axis=-1)
    return np.where(dist <= delta, 0.0, -1.0)


@dataclass
class EnvStep:
    next_state: np.ndarray
    done: bool
    info: dict = field(default_factory=dict)


class GoalEnv:
    """Deterministic goal-conditioned environment.

    Subclasses provide the dimensions, bounds and the pure batched
    :meth:`transition`; everything else (episode clock, action clamping,
    success test) lives here.  ``goal_low``/``goal_high`` bound the region
    subgoals are mapped into; ``state_low``/``state_high`` are used only to
    normalise network inputs.
    """

    name = "base"
    state_dim: int
    goal_dim: int
    action_dim: int
    horizon: int
    state_low: np.ndarray
    state_high: np.ndarray
    goal_low: np.ndarray
    goal_high: np.ndarray

    def __init__(self) -> None:
        self._state: np.ndarray | None = None
        self.goal: np.ndarray | None = None
        self.t = 0
        self.interactions = 0
        self.delta: float = 0.1 * self.goal_diameter()

    # -- subclass hooks -----------------------------------------------------

    def sample_instance(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Draw ``(initial_state, goal)`` from the seeded instance distribution."""
        raise NotImplementedError

    def transition(self, states: np.ndarray, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Pure batched dynamics on clamped actions; returns (next_states, blocked flags)."""
        raise NotImplementedError

    def achieved_goal(self, state) -> np.ndarray:
        raise NotImplementedError

    def batch_achieved_goal(self, states: np.ndarray) -> np.ndarray:
        return np.stack([self.achieved_goal(s) for s in states])

    def validate_state(self, state: np.ndarray) -> None:
        """Raise :class:`InvalidStateError` naming the violated bound."""
        if state.shape != (self.state_dim,):
            raise InvalidStateError(f"state has shape {state.shape}, expected ({self.state_dim},)")
        if not np.all(np.isfinite(state)):
            raise InvalidStateError("state has non-finite entries")

    def action_displacement(self, actions: np.ndarray) -> np.ndarray:
        """Free-space change of the achieved goal produced by ``actions``."""
        raise NotImplementedError

    def infer_action(self, state: np.ndarray, next_state: np.ndarray) -> np.ndarray:
        """Action that explains a demonstrated state pair in free space."""
        raise NotImplementedError

    # -- shared machinery ---------------------------------------------------

    def goal_diameter(self) -> float:
        return float(np.linalg.norm(np.asarray(self.goal_high) - np.asarray(self.goal_low)))

    @property
    def state(self) -> np.ndarray:
        if self._state is None:
            raise ContractError("environment has not been reset")
        return self._state.copy()

    def reset(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        state, goal = self.sample_instance(rng)
        self._state = np.asarray(state, dtype=np.float64)
        self.goal = np.asarray(goal, dtype=np.float64)
        self.t = 0
        return self.state

    def reset_to(self, state, goal=None) -> np.ndarray:
        s = np.array(state, dtype=np.float64)
        self.validate_state(s)
        self._state = s
        if goal is not None:
            self.goal = np.asarray(goal, dtype=np.float64)
        self.t = 0
        return self.state

    def clamp_actions(self, actions: np.ndarray) -> tuple[np.ndarray, bool]:
        a = np.asarray(actions, dtype=np.float64)
        if a.shape[-1] != self.action_dim:
            raise ContractError(f"action has {a.shape[-1]} components, expected {self.action_dim}")
        a = np.where(np.isfinite(a), a, 0.0)
        c = np.clip(a, -1.0, 1.0)
        return c, bool(np.any(c != a))

    def step(self, action) -> EnvStep:
        a, clamped = self.clamp_actions(action)
        nxt, blocked = self.transition(self.state[None, :], a[None, :])
        self._state = nxt[0]
        self.t += 1
        self.interactions += 1
        info = {"clamped": clamped, "collision": bool(np.any(blocked[0]))}
        success = False
        if self.goal is not None:
            dist = float(np.linalg.norm(self.achieved_goal(self._state) - self.goal))
            info["distance"] = dist
            success = dist <= self.delta
        info["success"] = success
        return EnvStep(self.state, success or self.t >= self.horizon, info)

    def contract(self) -> dict:
        return {
            "state_dim": self.state_dim,
            "goal_dim": self.goal_dim,
            "action_dim": self.action_dim,
            "horizon": self.horizon,
        }


def distance(a, b) -> float:
    return math.dist(np.ravel(a), np.ravel(b))
