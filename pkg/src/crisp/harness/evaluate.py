"""Deterministic evaluation over a fixed set of held-out instances."""
from __future__ import annotations

import json

from ..envs import MazeEnv, MazeSpec
from ..hierarchy import HierarchyConfig, HigherController, IdentityHigher, run_episode


def evaluate_policy(env, higher, lower, hcfg: HierarchyConfig, seeds, flat: bool = False) -> float:
    """Fraction of instances ``env.reset(seed)`` solved within ``T`` in deterministic mode."""
    from .trainer import flat_episode

    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one evaluation instance")
    wins = 0
    for s in seeds:
        env.reset(s)
        if flat:
            ok, _ = flat_episode(env, lower, hcfg.T, hcfg.delta_high, True)
        else:
            ok = run_episode(env, higher, lower, hcfg, deterministic=True).success
        wins += int(ok)
    return wins / len(seeds)


def save_suite(path, env: str, seeds, mazes=None) -> None:
    """Evaluation suite file: env name, instance seeds and, for mazes, the layouts."""
    d = {"env": env, "seeds": [int(s) for s in seeds]}
    if mazes is not None:
        d["mazes"] = [m.to_json() for m in mazes]
    with open(path, "w") as fh:
        json.dump(d, fh)


def load_suite(path) -> dict:
    with open(path) as fh:
        d = json.load(fh)
    if "seeds" not in d or not d["seeds"]:
        raise ValueError(f"{path}: suite lists no seeds")
    if "mazes" in d:
        d["mazes"] = [MazeSpec.from_json(m) for m in d["mazes"]]
    return d


def evaluate_checkpoint(ckpt, suite: dict, n_rollouts: int) -> float:
    """Success rate of a saved run on the first ``n_rollouts`` suite instances (cycled if fewer)."""
    from .trainer import Trainer

    if n_rollouts < 1:
        raise ValueError("n_rollouts must be >= 1")
    t = Trainer.from_checkpoint(ckpt, load_demos=False)
    if suite.get("env", t.cfg.env) != t.cfg.env:
        raise ValueError(f"suite is for {suite['env']!r}, checkpoint trained on {t.cfg.env!r}")
    env = t.eval_env
    if suite.get("mazes"):
        env = MazeEnv(specs=suite["mazes"], horizon=t.cfg.T, step_scale=t.env.step_scale)
    seeds = [suite["seeds"][i % len(suite["seeds"])] for i in range(n_rollouts)]
    higher = HigherController(t.higher, env) if t.higher is not None else IdentityHigher(env)
    return evaluate_policy(env, higher, t.lower, t.hcfg, seeds, flat=t.cfg.flat)
