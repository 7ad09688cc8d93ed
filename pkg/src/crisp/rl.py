"""Goal-conditioned soft actor-critic and its replay buffer."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .approx import Adam, MlpSpec, Network, squashed_sample, squashed_sample_backward


@dataclass
class Batch:
    state: np.ndarray
    goal: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_state: np.ndarray
    done: np.ndarray
    level: str = "lower"

    def __len__(self) -> int:
        return len(self.reward)


class ReplayBuffer:
    """Fixed-capacity ring of goal-conditioned transitions.

    ``level`` tags which hierarchy level's rewards the buffer holds, so an
    agent can refuse a batch from the wrong level.
    """

    FIELDS = ("state", "goal", "action", "reward", "next_state", "done")

    def __init__(self, capacity: int, state_dim: int, goal_dim: int, action_dim: int, level: str = "lower"):
        self.capacity = capacity
        self.level = level
        self.state = np.zeros((capacity, state_dim))
        self.goal = np.zeros((capacity, goal_dim))
        self.action = np.zeros((capacity, action_dim))
        self.reward = np.zeros(capacity)
        self.next_state = np.zeros((capacity, state_dim))
        self.done = np.zeros(capacity)
        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, state, goal, action, reward, next_state, done) -> None:
        i = self.cursor
        self.state[i] = state
        self.goal[i] = goal
        self.action[i] = action
        self.reward[i] = reward
        self.next_state[i] = next_state
        self.done[i] = float(done)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return rng.integers(0, self.size, size=n)

    def gather(self, idx) -> Batch:
        return Batch(
            self.state[idx], self.goal[idx], self.action[idx], self.reward[idx],
            self.next_state[idx], self.done[idx], self.level,
        )

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        return self.gather(self.sample_indices(n, rng))

    def state_dict(self) -> dict:
        d = {k: getattr(self, k)[: self.size].copy() for k in self.FIELDS}
        d.update(cursor=self.cursor, size=self.size, capacity=self.capacity, level=self.level)
        return d

    def load_state_dict(self, d: dict) -> None:
        if int(d["capacity"]) != self.capacity:
            raise ValueError("replay capacity mismatch")
        self.size = int(d["size"])
        self.cursor = int(d["cursor"])
        self.level = str(d["level"])
        for k in self.FIELDS:
            getattr(self, k)[: self.size] = d[k]


@dataclass
class SacConfig:
    hidden: tuple[int, ...] = (64, 64)
    lr: float = 3e-4
    alpha: float = 0.1
    gamma: float = 0.98
    tau: float = 0.005
    batch_size: int = 256

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")


def _normaliser(low, high):
    low = np.asarray(low, dtype=np.float64)
    span = np.asarray(high, dtype=np.float64) - low
    scale = np.where(span > 0, 2.0 / np.where(span > 0, span, 1.0), 0.0)
    return low, scale


@dataclass
class UpdateInfo:
    loss: float
    skipped: bool = False
    extra: dict = field(default_factory=dict)


class SacAgent:
    """Tanh-gaussian actor, twin critics with polyak-averaged targets, fixed entropy weight.

    Inputs are ``[normalised state, normalised goal]``; actions live in
    ``(-1, 1)^action_dim``.  Random draws are passed in by the caller.
    """

    def __init__(
        self,
        state_dim: int,
        goal_dim: int,
        action_dim: int,
        rng: np.random.Generator,
        cfg: SacConfig | None = None,
        state_bounds=None,
        goal_bounds=None,
        level: str = "lower",
        dtype=np.float64,
    ):
        self.cfg = cfg or SacConfig()
        self.dtype = np.dtype(dtype)
        self.level = level
        self.state_dim, self.goal_dim, self.action_dim = state_dim, goal_dim, action_dim
        sb = state_bounds or (-np.ones(state_dim), np.ones(state_dim))
        gb = goal_bounds or (-np.ones(goal_dim), np.ones(goal_dim))
        self._s_low, self._s_scale = _normaliser(*sb)
        self._g_low, self._g_scale = _normaliser(*gb)
        obs_dim = state_dim + goal_dim
        h = tuple(self.cfg.hidden)
        self.actor = Network(MlpSpec(obs_dim, action_dim, h, "gaussian"), rng, dtype=dtype)
        self.q1 = Network(MlpSpec(obs_dim + action_dim, 1, h, "linear"), rng, dtype=dtype)
        self.q2 = Network(MlpSpec(obs_dim + action_dim, 1, h, "linear"), rng, dtype=dtype)
        self.q1_targ = self.q1.copy()
        self.q2_targ = self.q2.copy()
        lr = self.cfg.lr
        self.opt_actor = Adam(self.actor.spec.size, lr, dtype=dtype)
        self.opt_q1 = Adam(self.q1.spec.size, lr, dtype=dtype)
        self.opt_q2 = Adam(self.q2.spec.size, lr, dtype=dtype)
        self.nan_skips = 0
        self.last_actor_q: np.ndarray | None = None

    # ------------------------------------------------------------ inputs

    def obs(self, states, goals) -> np.ndarray:
        s = (np.atleast_2d(states) - self._s_low) * self._s_scale - 1.0
        g = (np.atleast_2d(goals) - self._g_low) * self._g_scale - 1.0
        return np.concatenate([s, g], axis=1).astype(self.dtype, copy=False)

    def _cast(self, x):
        return np.asarray(x, dtype=self.dtype)

    def _split(self, raw):
        d = self.action_dim
        return raw[:, :d], raw[:, d:]

    # ------------------------------------------------------------ acting

    def act_batch(self, states, goals, deterministic: bool = True, noise=None) -> np.ndarray:
        mu, log_std = self._split(self.actor(self.obs(states, goals)))
        if deterministic:
            return np.tanh(mu)
        a, _, _ = squashed_sample(mu, log_std, self._cast(noise))
        return a

    def act(self, state, goal, deterministic: bool = True, rng: np.random.Generator | None = None, noise=None):
        """One action for one ``(state, goal)``; stochastic mode draws noise from ``rng`` unless given."""
        if not deterministic and noise is None:
            noise = rng.standard_normal(self.action_dim)
        n = None if noise is None else np.asarray(noise, dtype=np.float64)[None, :]
        return self.act_batch(state, goal, deterministic, n)[0]

    # ------------------------------------------------------------ critic

    def _check_level(self, batch: Batch) -> None:
        if batch.level != self.level:
            raise ValueError(f"{self.level}-level agent received a {batch.level}-level batch")

    def critic_targets(self, batch: Batch, noise) -> np.ndarray:
        obs_next = self.obs(batch.next_state, batch.goal)
        mu, log_std = self._split(self.actor(obs_next))
        a2, logp2, _ = squashed_sample(mu, log_std, self._cast(noise))
        x = np.concatenate([obs_next, a2], axis=1)
        q_next = np.minimum(self.q1_targ(x), self.q2_targ(x))[:, 0] - self.cfg.alpha * logp2
        return batch.reward + self.cfg.gamma * (1.0 - batch.done) * q_next

    def critic_update(self, batch: Batch, noise) -> UpdateInfo:
        self._check_level(batch)
        y = self.critic_targets(batch, noise)
        x = np.concatenate([self.obs(batch.state, batch.goal), self._cast(batch.action)], axis=1)
        q1, c1 = self.q1.forward(x)
        q2, c2 = self.q2.forward(x)
        e1 = q1[:, 0] - y
        e2 = q2[:, 0] - y
        loss = float(np.mean(e1 * e1) + np.mean(e2 * e2))
        if not np.isfinite(loss):
            self.nan_skips += 1
            return UpdateInfo(loss, skipped=True)
        n = len(y)
        g1, _ = self.q1.backward(c1, (2.0 / n) * e1[:, None], inputs=False)
        g2, _ = self.q2.backward(c2, (2.0 / n) * e2[:, None], inputs=False)
        self.opt_q1.step(self.q1.params, g1)
        self.opt_q2.step(self.q2.params, g2)
        self.q1.touched()
        self.q2.touched()
        self.polyak()
        return UpdateInfo(loss)

    def polyak(self) -> None:
        tau = self.cfg.tau
        for net, targ in ((self.q1, self.q1_targ), (self.q2, self.q2_targ)):
            targ.params *= 1.0 - tau
            targ.params += tau * net.params
            targ.touched()

    # ------------------------------------------------------------ actor

    def actor_update(self, batch: Batch, noise, regularizer=None) -> UpdateInfo:
        """One step on ``mean(alpha * log pi - min(Q1, Q2))`` plus an optional regulariser.

        ``regularizer(agent)`` returns ``(loss, grad)`` with ``grad`` w.r.t. the
        actor parameters, already weighted; it must run its own forward pass.
        """
        self._check_level(batch)
        obs = self.obs(batch.state, batch.goal)
        raw, cache = self.actor.forward(obs)
        mu, log_std = self._split(raw)
        a, logp, sc = squashed_sample(mu, log_std, self._cast(noise))
        x = np.concatenate([obs, a], axis=1)
        q1, c1 = self.q1.forward(x)
        q2, c2 = self.q2.forward(x)
        use1 = q1[:, 0] <= q2[:, 0]
        qmin = np.where(use1, q1[:, 0], q2[:, 0])
        self.last_actor_q = qmin
        alpha = self.cfg.alpha
        loss = float(np.mean(alpha * logp - qmin))
        n = len(qmin)
        gq = np.full(n, -1.0 / n)
        _, gx1 = self.q1.backward(c1, (gq * use1)[:, None], params=False)
        _, gx2 = self.q2.backward(c2, (gq * ~use1)[:, None], params=False)
        g_a = (gx1 + gx2)[:, obs.shape[1]:]
        g_mu, g_ls = squashed_sample_backward(sc, g_a, np.full(n, alpha / n))
        grad, _ = self.actor.backward(cache, np.concatenate([g_mu, g_ls], axis=1), inputs=False)
        extra = {"entropy": float(-np.mean(logp))}
        if regularizer is not None:
            reg_loss, reg_grad = regularizer(self)
            grad = grad + reg_grad
            extra["reg_loss"] = float(reg_loss)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            self.nan_skips += 1
            return UpdateInfo(loss, skipped=True, extra=extra)
        self.opt_actor.step(self.actor.params, grad)
        self.actor.touched()
        return UpdateInfo(loss, extra=extra)

    # ------------------------------------------------------------ persistence

    def networks(self) -> dict:
        return {"actor": self.actor, "q1": self.q1, "q2": self.q2, "q1_targ": self.q1_targ, "q2_targ": self.q2_targ}

    def optimizers(self) -> dict:
        return {"actor": self.opt_actor, "q1": self.opt_q1, "q2": self.opt_q2}

    def state_dict(self) -> dict:
        d = {f"net/{k}": v.params.copy() for k, v in self.networks().items()}
        for k, opt in self.optimizers().items():
            for kk, vv in opt.state_dict().items():
                d[f"opt/{k}/{kk}"] = vv
        d["nan_skips"] = self.nan_skips
        return d

    def load_state_dict(self, d: dict) -> None:
        for k, net in self.networks().items():
            net.set_params(d[f"net/{k}"])
        for k, opt in self.optimizers().items():
            opt.load_state_dict({kk: d[f"opt/{k}/{kk}"] for kk in ("m", "v", "t", "skipped", "hyper")})
        self.nan_skips = int(d["nan_skips"])
