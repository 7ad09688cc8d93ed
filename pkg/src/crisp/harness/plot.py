"""SVG figures from a run archive: success-rate curves and subgoal-curriculum snapshots."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

log = logging.getLogger(__name__)


@dataclass
class Curve:
    label: str
    steps: np.ndarray
    mean: np.ndarray
    low: np.ndarray
    high: np.ndarray
    seeds: int
    interpolated: bool


def aggregate(label: str, series: list[tuple[np.ndarray, np.ndarray]]) -> Curve:
    """Mean and min-max band across seeds.

    When the seeds were evaluated at different steps, each one is linearly
    interpolated onto the union of steps (clamped at its ends) and the curve
    is flagged as interpolated.
    """
    if not series:
        raise ValueError(f"no runs for {label!r}")
    grids = [np.asarray(s, dtype=np.float64) for s, _ in series]
    same = all(len(g) == len(grids[0]) and np.array_equal(g, grids[0]) for g in grids)
    if same:
        steps = grids[0]
        ys = np.stack([np.asarray(y, dtype=np.float64) for _, y in series])
    else:
        steps = np.unique(np.concatenate(grids))
        ys = np.stack([np.interp(steps, g, np.asarray(y, dtype=np.float64)) for g, (_, y) in zip(grids, series)])
    return Curve(label, steps, ys.mean(axis=0), ys.min(axis=0), ys.max(axis=0), len(series), not same)


def curves_from_runs(runs: list[dict]) -> dict[str, list[Curve]]:
    """Group archive runs by environment and label and aggregate each group."""
    groups: dict[str, dict[str, list]] = {}
    for r in runs:
        env = r.get("env") or _run_env(r["path"])
        steps = np.array([row["step"] for row in r["rows"]], dtype=np.float64)
        succ = np.array([row["success"] for row in r["rows"]], dtype=np.float64)
        groups.setdefault(env, {}).setdefault(r["label"], []).append((steps, succ))
    return {env: [aggregate(lbl, s) for lbl, s in sorted(g.items())] for env, g in groups.items()}


def _run_env(path) -> str:
    from .config import load_config

    cfg_path = Path(path) / "config.txt"
    return load_config(cfg_path).env if cfg_path.exists() else "run"


def plot_curves(curves: list[Curve], path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for cv in curves:
        name = f"{cv.label} (n={cv.seeds}{', interpolated' if cv.interpolated else ''})"
        (line,) = ax.plot(cv.steps, cv.mean, label=name)
        ax.fill_between(cv.steps, cv.low, cv.high, color=line.get_color(), alpha=0.2, linewidth=0)
    ax.set_xlabel("environment steps")
    ax.set_ylabel("success rate")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(title)
    ax.legend(fontsize=7, loc="best")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_curriculum(run_dir, path, n_snapshots: int = 3, demo: int = 0) -> bool:
    """Subgoals of one demo drawn over its maze layout at evenly spaced repopulation epochs.

    Returns False (and writes nothing) when the run kept no curriculum files.
    """
    from ..relabel import load_subgoals

    files = sorted((Path(run_dir) / "curriculum").glob("dg_*.jsonl"))
    if not files:
        return False
    pick = sorted({files[int(round(i))] for i in np.linspace(0, len(files) - 1, min(n_snapshots, len(files)))})
    demo_states = None
    demo_file = Path(run_dir) / "demos.jsonl"
    if demo_file.exists():
        from ..demos import load_dataset

        ds = load_dataset(demo_file)
        if demo < len(ds):
            demo_states = ds[demo].states
    fig, axes = plt.subplots(1, len(pick), figsize=(3.2 * len(pick), 3.4), squeeze=False)
    for ax, f in zip(axes[0], pick):
        dg = load_subgoals(f)
        mine = [t for t in dg.transitions if t.demo == demo]
        if mine and len(mine[0].initial_state) > 4:
            _draw_grid(ax, mine[0].initial_state)
        if demo_states is not None:
            ax.plot(demo_states[:, 0], demo_states[:, 1], color="0.6", lw=1)
        for t in mine:
            ax.scatter(t.subgoal[0], t.subgoal[1], marker="o" if t.verified else "x",
                       color="tab:blue" if t.verified else "tab:red", s=18, zorder=3)
        ax.set_title(f"step {dg.epoch}: {len(mine)} subgoals", fontsize=8)
        ax.set_aspect("equal")
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return True


def _draw_grid(ax, state) -> None:
    occ = np.asarray(state[2:])
    side = int(round(np.sqrt(len(occ))))
    if side * side != len(occ):
        return
    ax.imshow(occ.reshape(side, side), origin="lower", cmap="Greys", extent=(0, side, 0, side), vmin=0, vmax=1)


def plot_archive(archive, out_dir) -> dict:
    """Write ``success_<env>.svg`` per environment and ``curriculum_<run>.svg`` per run with snapshots.

    Returns the written files and the labels whose curves needed interpolation.
    """
    from .sweep import read_archive

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = read_archive(archive)
    written, flagged = [], []
    for env, curves in curves_from_runs(runs).items():
        f = out / f"success_{env}.svg"
        plot_curves(curves, f, title=f"{env}: mean and min-max over seeds")
        written.append(f)
        flagged += [f"{env}:{c.label}" for c in curves if c.interpolated]
    for r in runs:
        f = out / f"curriculum_{r['dir']}.svg"
        if plot_curriculum(r["path"], f):
            written.append(f)
    for name in flagged:
        log.warning("%s: step grids differed across seeds; curves were interpolated", name)
    return {"files": [str(f) for f in written], "interpolated": flagged}
