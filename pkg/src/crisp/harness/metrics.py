"""Metrics CSV: one row per evaluation point."""
from __future__ import annotations

import csv
import math


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_metrics(rows: list[dict], path) -> None:
    """Write rows with ``repr`` floats so a re-read gives back identical values."""
    if not rows:
        raise ValueError("no metrics rows to write")
    keys = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in keys])


def _parse(v: str):
    try:
        return int(v)
    except ValueError:
        return float(v)


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        return [{k: _parse(v) for k, v in row.items()} for row in rd]
