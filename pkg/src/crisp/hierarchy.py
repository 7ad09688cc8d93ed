"""Two-level control loop: a higher policy picks a subgoal every ``c`` steps, a lower primitive chases it."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, GoalEnv, sparse_reward

VARIANTS = ("HIER", "HIER-NEG")
SUBGOAL_EPS = 1e-6


@dataclass
class HierarchyConfig:
    c: int
    T: int
    delta_low: float
    delta_high: float

    def __post_init__(self):
        if not 1 <= self.c <= self.T:
            raise ConfigError(f"need 1 <= c <= T, got c={self.c}, T={self.T}")
        if self.delta_low <= 0 or self.delta_high <= 0:
            raise ConfigError("success thresholds must be positive")

    @classmethod
    def for_env(cls, env: GoalEnv, c: int, T: int | None = None) -> "HierarchyConfig":
        return cls(c, T or env.horizon, env.delta, env.delta)


# ------------------------------------------------------------------ subgoal map


def subgoal_to_goal_space(raw, env: GoalEnv, eps: float = SUBGOAL_EPS) -> np.ndarray:
    """Affine map of ``(-1, 1)^d`` onto the goal box; ``raw`` is first clamped to ``[-1+eps, 1-eps]``."""
    r = np.clip(np.asarray(raw, dtype=np.float64), -1.0 + eps, 1.0 - eps)
    return env.goal_low + (r + 1.0) * 0.5 * (env.goal_high - env.goal_low)


def goal_space_to_subgoal(goal, env: GoalEnv) -> np.ndarray:
    """Inverse of :func:`subgoal_to_goal_space` (no clamping)."""
    span = env.goal_high - env.goal_low
    return 2.0 * (np.asarray(goal, dtype=np.float64) - env.goal_low) / span - 1.0


# ------------------------------------------------------------------ controllers


class HigherController:
    """Wraps a higher SAC agent: its raw action in ``(-1,1)^d`` becomes a goal-space subgoal."""

    learns = True

    def __init__(self, agent, env: GoalEnv):
        self.agent = agent
        self.env = env

    def propose(self, state, goal, deterministic: bool, rng):
        raw = self.agent.act(state, goal, deterministic, rng)
        return raw, subgoal_to_goal_space(raw, self.env)


class IdentityHigher:
    """Always hands the episode goal down unchanged; collapses the hierarchy when ``c = T``."""

    learns = False

    def __init__(self, env: GoalEnv):
        self.env = env

    def propose(self, state, goal, deterministic, rng):
        g = np.array(goal, dtype=np.float64)
        return goal_space_to_subgoal(g, self.env), g


class StraightLinePrimitive:
    """Scripted lower primitive heading straight at its goal at ``speed`` (fraction of full action).

    Only meaningful where the achieved goal is the agent position (point,
    line, maze); it ignores walls.
    """

    def __init__(self, env: GoalEnv, speed: float = 1.0):
        self.env = env
        self.speed = speed

    def act_batch(self, states, goals, deterministic: bool = True, noise=None):
        pos = self.env.batch_achieved_goal(np.atleast_2d(states))
        unit = self.env.action_displacement(np.ones(self.env.action_dim))
        a = (np.atleast_2d(goals) - pos) / unit
        return np.clip(a, -self.speed, self.speed)

    def act(self, state, goal, deterministic=True, rng=None, noise=None):
        return self.act_batch(state, goal)[0]


# ------------------------------------------------------------------ episodes


@dataclass
class HigherTransition:
    state: np.ndarray
    goal: np.ndarray
    raw: np.ndarray
    subgoal: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool
    lower_reached: bool
    steps: int


@dataclass
class LowerTransition:
    state: np.ndarray
    subgoal: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool


@dataclass
class HierEpisodeLog:
    higher: list[HigherTransition] = field(default_factory=list)
    lower: list[LowerTransition] = field(default_factory=list)
    success: bool = False
    goal: np.ndarray | None = None

    @property
    def steps(self) -> int:
        return len(self.lower)

    @property
    def subgoals(self) -> list[np.ndarray]:
        return [h.subgoal for h in self.higher]

    def to_json(self) -> dict:
        return {
            "success": self.success,
            "goal": None if self.goal is None else self.goal.tolist(),
            "steps": self.steps,
            "subgoals": [s.tolist() for s in self.subgoals],
            "higher_rewards": [h.reward for h in self.higher],
            "lower_reached": [h.lower_reached for h in self.higher],
        }


def run_episode(
    env: GoalEnv,
    higher,
    lower,
    cfg: HierarchyConfig,
    deterministic: bool = False,
    rng_high: np.random.Generator | None = None,
    rng_low: np.random.Generator | None = None,
    seed: int | None = None,
    on_lower=None,
    on_higher=None,
    budget: int | None = None,
) -> HierEpisodeLog:
    """Roll out one episode.

    The environment must already be reset unless ``seed`` is given.  Every
    block runs exactly ``c`` lower steps unless the episode goal is reached or
    ``T`` runs out first.  ``on_lower(tr)`` / ``on_higher(tr)`` fire as each
    transition is logged, which is where a trainer hooks its updates.
    ``budget`` caps the number of steps below ``T`` (a trainer's last episode).
    """
    if seed is not None:
        env.reset(seed)
    goal = env.goal.copy()
    log = HierEpisodeLog(goal=goal)
    state = env.state
    limit = cfg.T if budget is None else min(cfg.T, budget)
    t = 0
    while t < limit and not log.success:
        raw, subgoal = higher.propose(state, goal, deterministic, rng_high)
        block_start = state
        reached = False
        steps = 0
        while steps < cfg.c and t < limit:
            action = lower.act(state, subgoal, deterministic, rng_low)
            step = env.step(action)
            nxt = step.next_state
            ag = env.achieved_goal(nxt)
            r_in = sparse_reward(ag, subgoal, cfg.delta_low)
            reached = reached or r_in == 0.0
            tr = LowerTransition(state, subgoal, np.asarray(action), r_in, nxt, r_in == 0.0)
            log.lower.append(tr)
            if on_lower is not None:
                on_lower(tr)
            state = nxt
            t += 1
            steps += 1
            if sparse_reward(ag, goal, cfg.delta_high) == 0.0:
                log.success = True
                break
        r_ex = sparse_reward(env.achieved_goal(state), goal, cfg.delta_high)
        htr = HigherTransition(block_start, goal, raw, subgoal, r_ex, state, log.success, reached, steps)
        log.higher.append(htr)
        if on_higher is not None:
            on_higher(htr)
    return log


def higher_reward_shaping(log: HierEpisodeLog, variant: str = "HIER") -> np.ndarray:
    """Higher-level rewards; HIER-NEG charges an extra -1 for every block whose subgoal was missed."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    r = np.array([h.reward for h in log.higher], dtype=np.float64)
    if variant == "HIER-NEG":
        r -= np.array([0.0 if h.lower_reached else 1.0 for h in log.higher])
    return r


def shaped_reward(tr: HigherTransition, variant: str) -> float:
    return tr.reward - (1.0 if variant == "HIER-NEG" and not tr.lower_reached else 0.0)


def expected_decisions(steps: int, c: int) -> int:
    return math.ceil(steps / c)
