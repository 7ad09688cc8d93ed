"""The joint training loop, its checkpoints and the flat single-level baseline."""
from __future__ import annotations

import json
import logging
import math
import os
from pathlib import Path

import numpy as np

from ..approx import load_networks, save_networks
from ..core import ConfigError, GoalEnv, sparse_reward
from ..demos import DemoDataset, generate, load_dataset, save_dataset
from ..envs import MazeEnv, generate_maze, make_env
from ..hierarchy import (
    HierarchyConfig,
    HigherController,
    IdentityHigher,
    LowerTransition,
    goal_space_to_subgoal,
    run_episode,
    shaped_reward,
)
from ..regularize import ExpertBatch, Regularizer, RegularizerConfig
from ..relabel import EmptyDatasetError, StepMeter, SubgoalDataset, SubgoalTransition, repopulate
from ..rl import ReplayBuffer, SacAgent, SacConfig
from .config import RunConfig

log = logging.getLogger(__name__)

STREAMS = (
    "instances",
    "init_low",
    "init_high",
    "init_disc",
    "act_low",
    "act_high",
    "upd_low",
    "upd_high",
    "reg_low",
    "reg_high",
)
LOSS_KEYS = ("loss_low_q", "loss_low_pi", "loss_high_q", "loss_high_pi", "loss_disc_low", "loss_disc_high")
METRIC_KEYS = ("step", "relabel_steps", *LOSS_KEYS, "success", "dg_size", "subgoals_per_demo",
               "episodes", "nan_skips", "fallback")
EVAL_SEED_BASE = 2**30
MAX_CONSECUTIVE_NAN = 100
TEST_MAZE_BASE = 100_000


class TrainingAborted(RuntimeError):
    pass


def build_env(cfg: RunConfig, split: str = "train") -> GoalEnv:
    """Environment for ``split`` ("train" or "test"); mazes come from disjoint fixed seed ranges."""
    kw = {"horizon": cfg.T}
    if cfg.step_scale > 0 and cfg.env != "rope":
        kw["step_scale"] = cfg.step_scale
    if cfg.env == "maze":
        n, base = (cfg.train_mazes, 0) if split == "train" else (cfg.test_mazes, TEST_MAZE_BASE)
        return MazeEnv(specs=[generate_maze(base + i) for i in range(n)], **kw)
    return make_env(cfg.env, **kw)


def flat_episode(env: GoalEnv, agent, T: int, delta: float, deterministic: bool, rng=None,
                 on_step=None, budget: int | None = None) -> tuple[bool, int]:
    """Single-level rollout toward the episode goal; returns ``(success, steps)``."""
    goal = env.goal.copy()
    s = env.state
    limit = T if budget is None else min(T, budget)
    for t in range(limit):
        a = agent.act(s, goal, deterministic, rng)
        nxt = env.step(a).next_state
        r = sparse_reward(env.achieved_goal(nxt), goal, delta)
        if on_step is not None:
            on_step(LowerTransition(s, goal, np.asarray(a), r, nxt, r == 0.0))
        s = nxt
        if r == 0.0:
            return True, t + 1
    return False, limit


def _nanmean(total: float, count: int) -> float:
    return total / count if count else math.nan


class Trainer:
    """Owns every learner, buffer and random stream of one run.

    Random streams are spawned per purpose from the run seed so that turning
    a component off never shifts the draws of the others; this is what makes
    the reduction checks (psi = 0 versus HIER, c = T versus FLAT) bitwise.
    """

    def __init__(self, cfg: RunConfig, demos: DemoDataset | None = None, out_dir=None, load_demos: bool = True):
        if load_demos and demos is None and cfg.demos and not Path(cfg.demos).exists():
            raise ConfigError(f"demo file {cfg.demos!r} does not exist")
        self.cfg = cfg
        self.out_dir = Path(out_dir) if out_dir else None
        self.env = build_env(cfg, "train")
        self.parse_env = build_env(cfg, "train")
        self.eval_env = build_env(cfg, "test")
        env = self.env
        dl = cfg.delta_low or env.delta
        dh = cfg.delta_high or env.delta
        self.hcfg = HierarchyConfig(cfg.c, cfg.T, dl, dh)
        seqs = np.random.SeedSequence(cfg.seed).spawn(len(STREAMS))
        self.rngs = {name: np.random.default_rng(s) for name, s in zip(STREAMS, seqs)}

        hidden = tuple(cfg.hidden)
        dt = np.dtype(cfg.precision)
        low_cfg = SacConfig(hidden, cfg.lr, cfg.alpha, cfg.gamma, cfg.tau, cfg.batch_size)
        sb = (env.state_low, env.state_high)
        gb = (env.goal_low, env.goal_high)
        self.lower = SacAgent(env.state_dim, env.goal_dim, env.action_dim, self.rngs["init_low"], low_cfg, sb, gb, "lower", dt)
        self.low_buf = ReplayBuffer(cfg.buffer_capacity, env.state_dim, env.goal_dim, env.action_dim, "lower")
        self.higher = None
        self.high_buf = None
        if cfg.flat or cfg.higher == "identity":
            self.controller = IdentityHigher(env)
            self.eval_controller = IdentityHigher(self.eval_env)
        else:
            high_cfg = SacConfig(hidden, cfg.lr, cfg.alpha, cfg.higher_gamma, cfg.tau, cfg.batch_size)
            self.higher = SacAgent(env.state_dim, env.goal_dim, env.goal_dim, self.rngs["init_high"], high_cfg, sb, gb, "higher", dt)
            self.high_buf = ReplayBuffer(cfg.buffer_capacity, env.state_dim, env.goal_dim, env.goal_dim, "higher")
            self.controller = HigherController(self.higher, env)
            self.eval_controller = HigherController(self.higher, self.eval_env)

        kind = cfg.regularizer if cfg.parser != "none" else "none"
        rcfg = RegularizerConfig(kind, cfg.psi, cfg.conditioned, cfg.lr, cfg.batch_size, hidden)
        obs_dim = env.state_dim + env.goal_dim
        self.reg_low = Regularizer(rcfg, env.action_dim, obs_dim, self.rngs["init_disc"], "lower", dt)
        self.reg_high = None
        if self.higher is not None:
            self.reg_high = Regularizer(rcfg, env.goal_dim, obs_dim, self.rngs["init_disc"], "higher", dt)

        self.demos = demos
        if self.demos is None and cfg.parser != "none" and load_demos:
            self.demos = self._load_or_generate_demos()

        self.env_steps = 0
        self.episodes = 0
        self.meter = StepMeter()
        self.dg: SubgoalDataset | None = None
        self.fallback = False
        self.expert_low: ExpertBatch | None = None
        self.expert_high: ExpertBatch | None = None
        self.acc = {k: [0.0, 0] for k in LOSS_KEYS}
        self.trace: list[tuple] = []
        self.rows: list[dict] = []
        self.curriculum: list[tuple[int, int, float]] = []
        self.consecutive_nan = 0
        self.total_nan = 0
        self.last_eval_step = -1

    # ------------------------------------------------------------ demos & D_g

    def _load_or_generate_demos(self) -> DemoDataset:
        cfg = self.cfg
        if cfg.demos:
            return load_dataset(cfg.demos)
        ds = generate(self.parse_env, cfg.demo_count, cfg.demo_seed, c=cfg.c)
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            save_dataset(ds, self.out_dir / "demos.jsonl")
        return ds

    def repopulate(self) -> None:
        cfg = self.cfg
        try:
            dg = repopulate(self.dg, self.demos, self.lower, self.parse_env, cfg.parser, self.env_steps,
                            c=cfg.c, delta=self.hcfg.delta_low, k=cfg.k, meter=self.meter,
                            checkpoint_id=f"step-{self.env_steps}")
        except EmptyDatasetError:
            dg = SubgoalDataset([], {"epoch": self.env_steps, "parser": cfg.parser})
        self.dg = dg
        self.fallback = len(dg) == 0
        self.curriculum.append((self.env_steps, len(dg), dg.subgoals_per_demo()))
        self._build_expert_batches()
        if self.out_dir is not None:
            from ..relabel import save_subgoals

            d = self.out_dir / "curriculum"
            d.mkdir(parents=True, exist_ok=True)
            save_subgoals(dg, d / f"dg_{self.env_steps:08d}.jsonl")

    def _build_expert_batches(self) -> None:
        self.expert_low = self.expert_high = None
        if self.fallback:
            return
        env = self.env
        pairs = self.dg.lower_pairs(self.demos, env, verified_only=self.cfg.lower_pairs == "verified")
        if pairs is not None:
            s, g, a = pairs
            self.expert_low = ExpertBatch(self.lower.obs(s, g), a)
        if self.higher is not None:
            s, sg, g = self.dg.arrays()
            self.expert_high = ExpertBatch(self.higher.obs(s, g), goal_space_to_subgoal(sg, env))

    # ------------------------------------------------------------ updates

    def _record(self, key: str, value: float) -> None:
        if np.isfinite(value):
            a = self.acc[key]
            a[0] += value
            a[1] += 1

    def _update(self, agent, buf, reg, expert, rng_upd, rng_reg, tag: str) -> None:
        B = self.cfg.batch_size
        ad = agent.action_dim
        batch = buf.sample(B, rng_upd)
        noise_q = rng_upd.standard_normal((B, ad))
        noise_pi = rng_upd.standard_normal((B, ad))
        term = None
        if reg is not None and reg.active and expert is not None:
            idx = rng_reg.integers(0, len(expert), size=B)
            eb = ExpertBatch(expert.obs[idx], expert.target[idx])
            if reg.cfg.kind == "irl":
                dinfo = reg.disc_step(agent, eb, rng_reg.standard_normal((B, ad)))
                self._record(f"loss_disc_{tag}", dinfo.loss)
            term = reg.policy_term(eb, rng_reg.standard_normal((B, ad)))
        qi = agent.critic_update(batch, noise_q)
        pi = agent.actor_update(batch, noise_pi, term)
        self._record(f"loss_{tag}_q", qi.loss)
        self._record(f"loss_{tag}_pi", pi.loss)
        self.trace.append((tag, self.env_steps, qi.loss, pi.loss))
        if qi.skipped or pi.skipped:
            self.consecutive_nan += 1
            self.total_nan += 1
            if self.consecutive_nan >= MAX_CONSECUTIVE_NAN:
                raise TrainingAborted(f"{MAX_CONSECUTIVE_NAN} consecutive non-finite updates at step {self.env_steps}")
        else:
            self.consecutive_nan = 0

    def _on_lower(self, tr: LowerTransition) -> None:
        cfg = self.cfg
        self.low_buf.add(tr.state, tr.subgoal, tr.action, tr.reward, tr.next_state, tr.done)
        self.env_steps += 1
        if self.env_steps >= cfg.warmup and self.env_steps % cfg.update_every == 0:
            self._update(self.lower, self.low_buf, self.reg_low, self.expert_low,
                         self.rngs["upd_low"], self.rngs["reg_low"], "low")
        if self.env_steps % cfg.eval_every == 0:
            self.log_metrics()
        if cfg.parser != "none" and self.env_steps % cfg.p == 0 and self.env_steps < cfg.total_steps:
            self.repopulate()

    def _on_higher(self, tr) -> None:
        r = shaped_reward(tr, self.cfg.variant)
        self.high_buf.add(tr.state, tr.goal, tr.raw, r, tr.next_state, tr.done)
        if self.env_steps >= self.cfg.warmup:
            self._update(self.higher, self.high_buf, self.reg_high, self.expert_high,
                         self.rngs["upd_high"], self.rngs["reg_high"], "high")

    # ------------------------------------------------------------ loop

    def run_one_episode(self) -> None:
        cfg = self.cfg
        seed = int(self.rngs["instances"].integers(0, EVAL_SEED_BASE))
        self.env.reset(seed)
        budget = cfg.total_steps - self.env_steps
        if cfg.flat:
            flat_episode(self.env, self.lower, cfg.T, self.hcfg.delta_high, False, self.rngs["act_low"],
                         on_step=self._on_lower, budget=budget)
        else:
            run_episode(self.env, self.controller, self.lower, self.hcfg, False, self.rngs["act_high"],
                        self.rngs["act_low"], on_lower=self._on_lower,
                        on_higher=self._on_higher if self.higher is not None else None, budget=budget)
        self.episodes += 1

    def run(self, stop_after: int | None = None) -> list[dict]:
        """Train until ``total_steps`` (or the end of the episode that crosses ``stop_after``)."""
        cfg = self.cfg
        if self.dg is None and cfg.parser != "none":
            self.repopulate()
        next_ckpt = self._next_checkpoint()
        while self.env_steps < cfg.total_steps:
            self.run_one_episode()
            if next_ckpt is not None and self.env_steps >= next_ckpt and self.out_dir is not None:
                self.save_checkpoint(self.out_dir / "checkpoint")
                next_ckpt = self._next_checkpoint()
            if stop_after is not None and self.env_steps >= stop_after:
                return self.rows
        if self.last_eval_step != self.env_steps:
            self.log_metrics()
        if self.out_dir is not None:
            self.save_checkpoint(self.out_dir / "checkpoint")
            self.write_outputs()
        return self.rows

    def _next_checkpoint(self):
        every = self.cfg.checkpoint_every
        if not every:
            return None
        return (self.env_steps // every + 1) * every

    # ------------------------------------------------------------ evaluation & metrics

    def evaluate(self, n: int | None = None) -> float:
        from .evaluate import evaluate_policy

        n = self.cfg.eval_rollouts if n is None else n
        seeds = [EVAL_SEED_BASE + i for i in range(n)]
        return evaluate_policy(self.eval_env, self.eval_controller, self.lower, self.hcfg, seeds, flat=self.cfg.flat)

    def log_metrics(self) -> dict:
        row = {"step": self.env_steps, "relabel_steps": self.meter.steps}
        for k in LOSS_KEYS:
            row[k] = _nanmean(*self.acc[k])
            self.acc[k] = [0.0, 0]
        row["success"] = self.evaluate()
        row["dg_size"] = 0 if self.dg is None else len(self.dg)
        row["subgoals_per_demo"] = 0.0 if self.dg is None else self.dg.subgoals_per_demo()
        row["episodes"] = self.episodes
        row["nan_skips"] = self.total_nan
        row["fallback"] = int(self.fallback)
        self.rows.append(row)
        self.last_eval_step = self.env_steps
        log.info("step %d success %.3f dg %d", self.env_steps, row["success"], row["dg_size"])
        return row

    def write_outputs(self) -> None:
        from .metrics import write_metrics

        self.out_dir.mkdir(parents=True, exist_ok=True)
        write_metrics(self.rows, self.out_dir / "metrics.csv")
        (self.out_dir / "config.txt").write_text(self.cfg.dumps())

    # ------------------------------------------------------------ checkpoints

    def _networks(self):
        nets, opts = {}, {}
        for level, agent in (("lower", self.lower), ("higher", self.higher)):
            if agent is None:
                continue
            nets.update({f"{level}/{k}": v for k, v in agent.networks().items()})
            opts.update({f"{level}/{k}": v for k, v in agent.optimizers().items()})
        for reg in (self.reg_low, self.reg_high):
            if reg is not None:
                nets.update(reg.networks())
                opts.update(reg.optimizers())
        return nets, opts

    def save_checkpoint(self, path) -> None:
        """Everything needed to continue bit-exactly: parameters, optimiser and replay state, RNGs, counters, D_g."""
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        nets, opts = self._networks()
        tmp = path / "networks.npz.tmp"
        save_networks(tmp, nets, opts)
        os.replace(tmp, path / "networks.npz")
        arrays = {}
        for level, buf in (("lower", self.low_buf), ("higher", self.high_buf)):
            if buf is None:
                continue
            for k, v in buf.state_dict().items():
                if isinstance(v, np.ndarray):
                    arrays[f"{level}/{k}"] = v
        with open(path / "replay.npz.tmp", "wb") as fh:
            np.savez(fh, **arrays)
        os.replace(path / "replay.npz.tmp", path / "replay.npz")
        meta = {
            "version": 1,
            "config": self.cfg.dumps(),
            "env_steps": self.env_steps,
            "episodes": self.episodes,
            "relabel_steps": self.meter.steps,
            "interactions": self.env.interactions,
            "rngs": {k: r.bit_generator.state for k, r in self.rngs.items()},
            "acc": self.acc,
            "rows": self.rows,
            "curriculum": self.curriculum,
            "consecutive_nan": self.consecutive_nan,
            "total_nan": self.total_nan,
            "last_eval_step": self.last_eval_step,
            "nan_skips": {"lower": self.lower.nan_skips, "higher": self.higher.nan_skips if self.higher else 0},
            "buffers": {
                level: {"cursor": buf.cursor, "size": buf.size}
                for level, buf in (("lower", self.low_buf), ("higher", self.high_buf))
                if buf is not None
            },
            "fallback": self.fallback,
            "dg": None if self.dg is None else {
                "provenance": self.dg.provenance,
                "transitions": [t.to_json() for t in self.dg.transitions],
            },
            "demos": self.cfg.demos or (str(self.out_dir / "demos.jsonl") if self.out_dir and self.demos is not None else ""),
        }
        (path / "meta.json.tmp").write_text(json.dumps(meta))
        os.replace(path / "meta.json.tmp", path / "meta.json")

    @classmethod
    def from_checkpoint(cls, path, out_dir=None, demos: DemoDataset | None = None, load_demos: bool = True) -> "Trainer":
        from .config import parse_config

        path = Path(path)
        meta = json.loads((path / "meta.json").read_text())
        if meta.get("version") != 1:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        cfg = parse_config(meta["config"])
        if demos is None and load_demos and meta["demos"] and Path(meta["demos"]).exists():
            demos = load_dataset(meta["demos"])
        t = cls(cfg, demos=demos, out_dir=out_dir, load_demos=load_demos)
        nets, opts = load_networks(path / "networks.npz")
        mine_n, mine_o = t._networks()
        for k, net in mine_n.items():
            net.set_params(nets[k].params)
        for k, opt in mine_o.items():
            opt.load_state_dict(opts[k].state_dict())
        with np.load(path / "replay.npz") as z:
            for level, buf in (("lower", t.low_buf), ("higher", t.high_buf)):
                if buf is None:
                    continue
                info = meta["buffers"][level]
                d = {k: z[f"{level}/{k}"] for k in ReplayBuffer.FIELDS}
                d.update(cursor=info["cursor"], size=info["size"], capacity=buf.capacity, level=level)
                buf.load_state_dict(d)
        for k, st in meta["rngs"].items():
            t.rngs[k].bit_generator.state = st
        t.env_steps = meta["env_steps"]
        t.episodes = meta["episodes"]
        t.meter.steps = meta["relabel_steps"]
        t.env.interactions = meta["interactions"]
        t.acc = {k: list(v) for k, v in meta["acc"].items()}
        t.rows = meta["rows"]
        t.curriculum = [tuple(x) for x in meta["curriculum"]]
        t.consecutive_nan = meta["consecutive_nan"]
        t.total_nan = meta["total_nan"]
        t.last_eval_step = meta["last_eval_step"]
        t.lower.nan_skips = meta["nan_skips"]["lower"]
        if t.higher is not None:
            t.higher.nan_skips = meta["nan_skips"]["higher"]
        if meta["dg"] is not None:
            t.dg = SubgoalDataset([SubgoalTransition.from_json(x) for x in meta["dg"]["transitions"]],
                                  meta["dg"]["provenance"])
            t.fallback = meta["fallback"]
            if t.demos is not None:
                t._build_expert_batches()
        return t


def train(cfg: RunConfig, out_dir=None, demos: DemoDataset | None = None) -> Trainer:
    t = Trainer(cfg, demos=demos, out_dir=out_dir)
    t.run()
    return t
