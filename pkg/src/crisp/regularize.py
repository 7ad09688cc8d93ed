"""LSGAN discriminators and the imitation terms that pull each policy toward expert data.

Both levels use the same machinery.  An expert batch is a pair
``(obs, target)``: ``obs`` is the agent's normalised input and ``target`` is
the expert's output in the agent's action coordinates (a raw subgoal for the
higher level, an inferred action for the lower level).  The discriminator
sees ``[output, obs]`` when conditioned, ``[output]`` otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .approx import Adam, MlpSpec, Network, squashed_sample, squashed_sample_backward
from .rl import UpdateInfo

KINDS = ("irl", "bc", "none")


@dataclass
class RegularizerConfig:
    kind: str = "irl"
    psi: float = 1e-3
    conditioned: bool = True
    lr: float = 3e-4
    batch_size: int = 256
    hidden: tuple[int, ...] = (64, 64)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"regulariser kind must be one of {KINDS}, got {self.kind!r}")
        if self.psi < 0:
            raise ValueError(f"psi must be non-negative, got {self.psi}")

    @property
    def active(self) -> bool:
        return self.kind != "none" and self.psi > 0


@dataclass
class ExpertBatch:
    obs: np.ndarray
    target: np.ndarray

    def __len__(self) -> int:
        return len(self.obs)


def lsgan_disc_loss(d_expert: np.ndarray, d_policy: np.ndarray):
    """``0.5 E[(D(e) - 1)^2] + 0.5 E[D(p)^2]`` and its gradients w.r.t. the two output columns."""
    loss = 0.5 * np.mean((d_expert - 1.0) ** 2) + 0.5 * np.mean(d_policy**2)
    return float(loss), (d_expert - 1.0) / d_expert.size, d_policy / d_policy.size


def irl_policy_loss(d_policy: np.ndarray):
    """Generator side: ``0.5 E[(D(p) - 1)^2]`` and its gradient w.r.t. ``D(p)``."""
    return float(0.5 * np.mean((d_policy - 1.0) ** 2)), (d_policy - 1.0) / d_policy.size


def bc_policy_loss(output: np.ndarray, target: np.ndarray):
    """Mean squared error over all elements and its gradient w.r.t. ``output``."""
    diff = output - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


class Discriminator:
    """Sigmoid-headed network scoring ``[output, obs]`` rows as expert (1) or policy (0)."""

    def __init__(self, output_dim: int, obs_dim: int, rng, conditioned: bool = True,
                 hidden=(64, 64), lr: float = 3e-4, level: str = "higher", dtype=np.float64):
        self.output_dim = output_dim
        self.conditioned = conditioned
        self.level = level
        in_dim = output_dim + (obs_dim if conditioned else 0)
        self.net = Network(MlpSpec(in_dim, 1, tuple(hidden), "sigmoid"), rng, dtype=dtype)
        self.opt = Adam(self.net.spec.size, lr, dtype=dtype)
        self.nan_skips = 0

    def inputs(self, output, obs) -> np.ndarray:
        x = np.concatenate([output, obs], axis=1) if self.conditioned else output
        return np.asarray(x, dtype=self.net.dtype)

    def __call__(self, output, obs) -> np.ndarray:
        return self.net(self.inputs(output, obs))[:, 0]


def disc_update(disc: Discriminator, expert_x: np.ndarray, policy_x: np.ndarray) -> UpdateInfo:
    """One Adam step on the LSGAN discriminator loss for already-built input rows."""
    de, ce = disc.net.forward(expert_x)
    dp, cp = disc.net.forward(policy_x)
    loss, ge, gp = lsgan_disc_loss(de, dp)
    if not np.isfinite(loss):
        disc.nan_skips += 1
        return UpdateInfo(loss, skipped=True)
    grad_e, _ = disc.net.backward(ce, ge, inputs=False)
    grad_p, _ = disc.net.backward(cp, gp, inputs=False)
    if not disc.opt.step(disc.net.params, grad_e + grad_p):
        disc.nan_skips += 1
        return UpdateInfo(loss, skipped=True)
    disc.net.touched()
    return UpdateInfo(loss, extra={"d_expert": float(de.mean()), "d_policy": float(dp.mean())})


class Regularizer:
    """Per-level imitation term with its own discriminator.

    ``trace`` records, for every discriminator step and every policy term, the
    actor and discriminator parameter versions it read; tests use it to check
    that the two sides of the min-max never share a pass.
    """

    def __init__(self, cfg: RegularizerConfig, action_dim: int, obs_dim: int, rng, level: str, dtype=np.float64):
        self.cfg = cfg
        self.level = level
        self.disc = None
        if cfg.kind == "irl":
            self.disc = Discriminator(action_dim, obs_dim, rng, cfg.conditioned, cfg.hidden, cfg.lr, level, dtype)
        self.trace: list[tuple[str, int, int]] = []

    @property
    def active(self) -> bool:
        return self.cfg.active

    def disc_step(self, agent, batch: ExpertBatch, noise) -> UpdateInfo:
        """Train the discriminator against fresh policy samples at the expert inputs."""
        raw = agent.actor(batch.obs)
        mu, log_std = agent._split(raw)
        a, _, _ = squashed_sample(mu, log_std, agent._cast(noise))
        self.trace.append(("disc", agent.actor.version, self.disc.net.version))
        return disc_update(self.disc, self.disc.inputs(batch.target, batch.obs), self.disc.inputs(a, batch.obs))

    def policy_term(self, batch: ExpertBatch, noise):
        """Closure for :meth:`SacAgent.actor_update` returning ``psi * (loss, grad)``."""
        psi = self.cfg.psi

        def term(agent):
            raw, cache = agent.actor.forward(batch.obs)
            mu, log_std = agent._split(raw)
            n = len(batch)
            if self.cfg.kind == "bc":
                out = np.tanh(mu)
                loss, g_out = bc_policy_loss(out, batch.target)
                g_mu = g_out * (1.0 - out * out)
                g_ls = np.zeros_like(log_std)
            else:
                a, _, sc = squashed_sample(mu, log_std, agent._cast(noise))
                d, dc = self.disc.net.forward(self.disc.inputs(a, batch.obs))
                self.trace.append(("policy", agent.actor.version, self.disc.net.version))
                loss, g_d = irl_policy_loss(d)
                _, g_x = self.disc.net.backward(dc, g_d, params=False)
                g_mu, g_ls = squashed_sample_backward(sc, g_x[:, : a.shape[1]], np.zeros(n))
            grad, _ = agent.actor.backward(cache, np.concatenate([g_mu, g_ls], axis=1), inputs=False)
            return psi * loss, psi * grad

        return term

    def networks(self) -> dict:
        return {} if self.disc is None else {f"disc_{self.level}": self.disc.net}

    def optimizers(self) -> dict:
        return {} if self.disc is None else {f"disc_{self.level}": self.disc.opt}
