"""Command-line entry point (``crisp <command> ...``)."""
from __future__ import annotations

import argparse
import json
import logging
import sys


def _train(args) -> int:
    from .harness import load_config, train

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    out = args.out or f"runs/{cfg.env}-{cfg.method}-s{cfg.seed}"
    t = train(cfg, out)
    last = t.rows[-1]
    print(json.dumps({"out": out, "step": last["step"], "success": last["success"],
                      "relabel_steps": last["relabel_steps"]}))
    return 0


def _gen_demos(args) -> int:
    from .demos import generate, save_dataset
    from .harness import RunConfig, build_env

    cfg = RunConfig(env=args.env, method="hier")
    env = build_env(cfg, "train")
    ds = generate(env, args.count, args.seed, c=args.c or cfg.c)
    save_dataset(ds, args.out)
    lengths = [len(t) for t in ds]
    print(json.dumps({"out": args.out, "count": len(ds), "min_len": min(lengths), "max_len": max(lengths)}))
    return 0


def _relabel(args) -> int:
    from .demos import load_dataset
    from .harness import Trainer
    from .relabel import StepMeter, repopulate, save_subgoals

    demos = load_dataset(args.demos)
    t = Trainer.from_checkpoint(args.checkpoint, load_demos=False)
    meter = StepMeter()
    dg = repopulate(None, demos, t.lower, t.parse_env, args.parser, t.env_steps, c=t.cfg.c,
                    delta=t.hcfg.delta_low, k=args.k, meter=meter, checkpoint_id=str(args.checkpoint))
    save_subgoals(dg, args.out)
    print(json.dumps({"out": args.out, "transitions": len(dg), "subgoals_per_demo": dg.subgoals_per_demo(),
                      "relabel_steps": meter.steps}))
    return 0


def _eval(args) -> int:
    from .harness.evaluate import evaluate_checkpoint, load_suite

    rate = evaluate_checkpoint(args.checkpoint, load_suite(args.suite), args.rollouts)
    print(json.dumps({"success": rate, "rollouts": args.rollouts}))
    return 0


def _make_suite(args) -> int:
    from .harness.evaluate import save_suite
    from .harness.trainer import EVAL_SEED_BASE, TEST_MAZE_BASE

    mazes = None
    if args.env == "maze":
        from .envs import generate_maze

        mazes = [generate_maze(TEST_MAZE_BASE + i) for i in range(args.mazes)]
    save_suite(args.out, args.env, [EVAL_SEED_BASE + i for i in range(args.count)], mazes)
    print(json.dumps({"out": args.out, "count": args.count}))
    return 0


def _sweep(args) -> int:
    from .harness import load_config
    from .harness.sweep import load_grid, sweep

    base = load_config(args.config)
    grid, seeds = load_grid(args.grid)
    entries = sweep(base, grid, seeds, args.out, args.workers)
    failed = [e for e in entries if e.get("status") != "ok"]
    print(json.dumps({"out": args.out, "runs": len(entries), "failed": len(failed)}))
    return 0


def _plot(args) -> int:
    from .harness.plot import plot_archive

    res = plot_archive(args.archive, args.out)
    print(json.dumps(res))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crisp", description="Hierarchical RL with primitive-informed subgoal relabeling.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train", help="train one run from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=_train)

    s = sub.add_parser("gen-demos", help="generate scripted expert demonstrations")
    s.add_argument("--env", required=True, choices=["maze", "blockpush", "rope"])
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--c", type=int, default=0, help="steps per subgoal the maze planner targets (default: the env's c)")
    s.set_defaults(func=_gen_demos)

    s = sub.add_parser("relabel", help="parse demos into subgoal transitions with a checkpoint's primitive")
    s.add_argument("--demos", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--parser", choices=["pip", "window"], default="pip")
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_relabel)

    s = sub.add_parser("eval", help="deterministic success rate of a checkpoint on a suite")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--suite", required=True)
    s.add_argument("--rollouts", type=int, default=20)
    s.set_defaults(func=_eval)

    s = sub.add_parser("make-suite", help="write a held-out evaluation suite file")
    s.add_argument("--env", required=True, choices=["maze", "blockpush", "rope", "point"])
    s.add_argument("--count", type=int, default=100)
    s.add_argument("--mazes", type=int, default=100)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_make_suite)

    s = sub.add_parser("sweep", help="train every grid point for every seed")
    s.add_argument("--config", required=True)
    s.add_argument("--grid", required=True)
    s.add_argument("--out", default="sweep")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=_sweep)

    s = sub.add_parser("plot", help="success curves and curriculum snapshots as SVG")
    s.add_argument("--archive", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    from .core import ConfigError
    from .demos import DatasetFormatError

    try:
        return args.func(args)
    except (ConfigError, DatasetFormatError, FileNotFoundError, ValueError) as exc:
        print(f"crisp {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
