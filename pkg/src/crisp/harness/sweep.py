"""Grid sweeps: one training run per (grid point, seed), archived under one directory.

A grid file uses the config syntax with comma-separated value lists::

    psi = 0.001, 0.1
    p = 2500, 5000
    seeds = 0, 1, 2

``seeds`` is optional and defaults to the base config's seed.  Any scalar
config key may be swept.  The archive holds one sub-directory per run plus an
``index.json`` recording each run's point, seed, directory and status; a run
that raises is recorded as failed and the sweep moves on.  Re-running a sweep
into the same directory skips runs whose checkpoint already reached the full
budget, so an interrupted sweep can be resumed.
"""
from __future__ import annotations

import itertools
import json
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from ..core import ConfigError
from .config import _FIELDS, RunConfig, _coerce

log = logging.getLogger(__name__)


def parse_grid(text: str) -> tuple[dict[str, list], list[int] | None]:
    grid: dict[str, list] = {}
    seeds = None
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"grid line {n}: expected key = v1, v2, ...")
        key, vals = (x.strip() for x in line.split("=", 1))
        items = [v.strip() for v in vals.split(",") if v.strip()]
        if not items:
            raise ConfigError(f"grid line {n}: no values for {key!r}")
        if key == "seeds":
            seeds = [int(v) for v in items]
            continue
        if key not in _FIELDS or key == "seed":
            raise ConfigError(f"grid line {n}: cannot sweep {key!r}")
        if isinstance(_FIELDS[key].default, tuple):
            raise ConfigError(f"grid line {n}: {key!r} takes a list value and cannot be swept")
        if key in grid:
            raise ConfigError(f"grid line {n}: duplicate key {key!r}")
        grid[key] = [_coerce(key, v) for v in items]
    return grid, seeds


def load_grid(path):
    with open(path) as fh:
        return parse_grid(fh.read())


def grid_points(grid: dict[str, list]) -> list[dict]:
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def point_label(point: dict) -> str:
    return ",".join(f"{k}={v}" for k, v in point.items()) or "base"


def _run_one(job):
    cfg_dict, out_dir = job
    from .config import from_dict
    from .trainer import train

    try:
        cfg = from_dict(cfg_dict)
        t = train(cfg, out_dir)
        return {"status": "ok", "final_success": t.rows[-1]["success"] if t.rows else None}
    except Exception as exc:  # recorded, the sweep continues
        return {"status": "failed", "error": f"{type(exc).__name__}: {exc}", "traceback": traceback.format_exc()}


def _finished(run_dir: Path, cfg_dict: dict):
    """Final success of a run that already completed with this exact config, else None."""
    meta_path = run_dir / "checkpoint" / "meta.json"
    if not (run_dir / "metrics.csv").exists() or not meta_path.exists():
        return None
    from .config import from_dict, parse_config

    meta = json.loads(meta_path.read_text())
    cfg = from_dict(cfg_dict)
    if parse_config(meta["config"]) != cfg or meta["env_steps"] < cfg.total_steps:
        return None
    return {"status": "ok", "final_success": meta["rows"][-1]["success"] if meta["rows"] else None, "resumed": True}


def _write_index(out: Path, base: RunConfig, entries: list[dict]) -> None:
    tmp = out / "index.json.tmp"
    tmp.write_text(json.dumps({"version": 1, "base": base.dumps(), "runs": entries}, indent=1))
    tmp.replace(out / "index.json")


def sweep(base: RunConfig, grid: dict[str, list], seeds=None, out_dir="sweep", workers: int = 1) -> list[dict]:
    """Train every grid point for every seed; returns the index entries (also written to ``index.json``)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [base.seed] if not seeds else list(seeds)
    entries, jobs = [], []
    for pi, point in enumerate(grid_points(grid)):
        for seed in seeds:
            run_dir = out / f"p{pi:03d}_s{seed}"
            d = base.to_dict(resolved=False)
            d.update(point)
            d["seed"] = seed
            try:
                RunConfig(**d)
            except ConfigError as exc:
                entries.append({"point": point, "label": point_label(point), "seed": seed,
                                "dir": run_dir.name, "status": "failed", "error": str(exc)})
                continue
            entries.append({"point": point, "label": point_label(point), "seed": seed, "dir": run_dir.name})
            done = _finished(run_dir, d)
            if done is not None:
                entries[-1].update(done)
                continue
            jobs.append((len(entries) - 1, (d, str(run_dir))))
    # separate processes keep one run's failure or memory from touching the next
    with ProcessPoolExecutor(max_workers=max(1, workers)) as pool:
        for (i, _), res in zip(jobs, pool.map(_run_one, [j for _, j in jobs])):
            entries[i].update(res)
            log.info("%s seed %s: %s", entries[i]["label"], entries[i]["seed"], res["status"])
            _write_index(out, base, entries)
    _write_index(out, base, entries)
    return entries


def _config_label(cfg: RunConfig) -> str:
    from .config import ENV_DEFAULTS

    label = f"{cfg.env}/{cfg.method}"
    if cfg.parser == "window":
        label += f" k={cfg.k}"
    if cfg.regularizer != "none" and cfg.psi != ENV_DEFAULTS[cfg.env]["psi"]:
        label += f" psi={cfg.psi:g}"
    return label


def read_archive(path) -> list[dict]:
    """Runs of an archive with their metrics rows.

    Uses ``index.json`` when present; otherwise every sub-directory holding a
    ``metrics.csv`` is a run, labelled by env, method, window size and any
    non-default psi.
    """
    from .config import load_config
    from .metrics import read_metrics

    root = Path(path)
    runs = []
    idx = root / "index.json"
    if idx.exists():
        for e in json.loads(idx.read_text())["runs"]:
            if e.get("status") != "ok":
                continue
            d = root / e["dir"]
            runs.append({**e, "path": d, "rows": read_metrics(d / "metrics.csv")})
    else:
        for d in sorted(p for p in root.iterdir() if (p / "metrics.csv").exists()):
            cfg = load_config(d / "config.txt") if (d / "config.txt").exists() else None
            label = _config_label(cfg) if cfg else d.name
            runs.append({"label": label, "seed": cfg.seed if cfg else 0, "dir": d.name, "path": d,
                         "rows": read_metrics(d / "metrics.csv")})
    if not runs:
        raise FileNotFoundError(f"{path}: archive holds no finished runs")
    return runs
