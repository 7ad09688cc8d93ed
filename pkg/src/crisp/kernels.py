"""Hot inner loops.

Every kernel exists twice: a loop version compiled with numba (``*_nb``) and a
vectorised numpy version (``*_np``).  The public name points at one of them
depending on :data:`crisp._accel.HAS_NUMBA`; both are importable so tests and
``benchmarks/bench_kernels.py`` can compare them directly.
"""
import math

import numpy as np

from ._accel import HAS_NUMBA, njit

__all__ = [
    "maze_transition",
    "rope_relax",
    "segment_free",
    "nearest_node",
    "BACKEND",
]


# --------------------------------------------------------------------------- maze


def _maze_transition_loops(states, actions, step, width, height, cell):
    n = states.shape[0]
    out = states.copy()
    blocked = np.zeros((n, 2), dtype=np.bool_)
    x_max = width * cell
    y_max = height * cell
    for r in range(n):
        x = states[r, 0]
        y = states[r, 1]
        # x axis first, then y from the updated x
        nx = x + step * actions[r, 0]
        if nx < 0.0 or nx >= x_max:
            blocked[r, 0] = True
        else:
            cx = int(math.floor(nx / cell))
            cy = int(math.floor(y / cell))
            if states[r, 2 + cy * width + cx] > 0.5:
                blocked[r, 0] = True
            else:
                x = nx
        ny = y + step * actions[r, 1]
        if ny < 0.0 or ny >= y_max:
            blocked[r, 1] = True
        else:
            cx = int(math.floor(x / cell))
            cy = int(math.floor(ny / cell))
            if states[r, 2 + cy * width + cx] > 0.5:
                blocked[r, 1] = True
            else:
                y = ny
        out[r, 0] = x
        out[r, 1] = y
    return out, blocked


maze_transition_nb = njit(_maze_transition_loops)


def maze_transition_np(states, actions, step, width, height, cell):
    """Batched per-axis sliding move of a point agent through an occupancy grid.

    ``states`` rows are ``[x, y, occupancy...]`` with the occupancy flattened
    row-major (index ``cy * width + cx``).  A move along an axis is rejected
    when it would leave the grid or end inside an occupied cell.
    """
    states = np.asarray(states, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.float64)
    n = states.shape[0]
    rows = np.arange(n)
    out = states.copy()
    x = states[:, 0]
    y = states[:, 1]

    nx = x + step * actions[:, 0]
    inside = (nx >= 0.0) & (nx < width * cell)
    cx = np.where(inside, np.floor(nx / cell), 0).astype(np.int64)
    cy = np.floor(y / cell).astype(np.int64)
    occ = states[rows, 2 + cy * width + cx] > 0.5
    block_x = ~inside | occ
    x = np.where(block_x, x, nx)

    ny = y + step * actions[:, 1]
    inside = (ny >= 0.0) & (ny < height * cell)
    cx = np.floor(x / cell).astype(np.int64)
    cy = np.where(inside, np.floor(ny / cell), 0).astype(np.int64)
    occ = states[rows, 2 + cy * width + cx] > 0.5
    block_y = ~inside | occ
    y = np.where(block_y, y, ny)

    out[:, 0] = x
    out[:, 1] = y
    return out, np.stack([block_x, block_y], axis=1)


# --------------------------------------------------------------------------- rope


def _clamp_link_py(p, i, anchor, lo, hi):
    dx = p[i, 0] - p[anchor, 0]
    dy = p[i, 1] - p[anchor, 1]
    length = math.sqrt(dx * dx + dy * dy)
    if length < 1e-12:
        return
    if length > hi:
        s = hi / length
    elif length < lo:
        s = lo / length
    else:
        return
    p[i, 0] = p[anchor, 0] + dx * s
    p[i, 1] = p[anchor, 1] + dy * s


_clamp_link = njit(_clamp_link_py)


def _rope_relax_loops(joints, pinned, rest, iters):
    n = joints.shape[0]
    p = joints.copy()
    for _ in range(iters):
        corr = np.zeros_like(p)
        for i in range(n - 1):
            dx = p[i + 1, 0] - p[i, 0]
            dy = p[i + 1, 1] - p[i, 1]
            length = math.sqrt(dx * dx + dy * dy)
            if length < 1e-12:
                continue
            wi = 0.0 if i == pinned else 1.0
            wj = 0.0 if i + 1 == pinned else 1.0
            wsum = wi + wj
            if wsum == 0.0:
                continue
            c = (length - rest) / length
            corr[i, 0] += wi / wsum * c * dx
            corr[i, 1] += wi / wsum * c * dy
            corr[i + 1, 0] -= wj / wsum * c * dx
            corr[i + 1, 1] -= wj / wsum * c * dy
        for i in range(n):
            deg = 2.0
            if i == 0 or i == n - 1:
                deg = 1.0
            p[i, 0] += corr[i, 0] / deg
            p[i, 1] += corr[i, 1] / deg
    if 0 <= pinned < n:
        lo = 0.5 * rest
        hi = 1.5 * rest
        for i in range(pinned + 1, n):
            _clamp_link(p, i, i - 1, lo, hi)
        for i in range(pinned - 1, -1, -1):
            _clamp_link(p, i, i + 1, lo, hi)
    return p


rope_relax_nb = njit(_rope_relax_loops)


def rope_relax_np(joints, pinned, rest, iters):
    """Jacobi projection of the link-length constraints of an open chain.

    Joint ``pinned`` (``-1`` for none) has infinite mass.  Each joint applies
    the average of the corrections proposed by its incident links, which keeps
    the update symmetric under reversing the joint order.  A final outward
    sweep from the pinned joint clamps any link still outside
    ``[0.5, 1.5] * rest``.
    """
    p = np.array(joints, dtype=np.float64, copy=True)
    n = p.shape[0]
    w = np.ones(n)
    if 0 <= pinned < n:
        w[pinned] = 0.0
    wi, wj = w[:-1], w[1:]
    wsum = wi + wj
    active_w = wsum > 0.0
    safe = np.where(active_w, wsum, 1.0)
    deg = np.full(n, 2.0)
    deg[0] = deg[-1] = 1.0
    for _ in range(iters):
        d = p[1:] - p[:-1]
        length = np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1])
        ok = active_w & (length >= 1e-12)
        c = np.where(ok, (length - rest) / np.where(ok, length, 1.0), 0.0)
        a = np.where(ok, wi / safe, 0.0)
        b = np.where(ok, wj / safe, 0.0)
        corr = np.zeros_like(p)
        # same accumulation order as the loop kernel: left link, then right link
        corr[:-1, 0] += a * c * d[:, 0]
        corr[:-1, 1] += a * c * d[:, 1]
        corr[1:, 0] -= b * c * d[:, 0]
        corr[1:, 1] -= b * c * d[:, 1]
        p += corr / deg[:, None]
    if 0 <= pinned < n:
        # outward pass from the pinned joint keeps every link in [0.5, 1.5] * rest
        for i in range(pinned + 1, n):
            _clamp_link_py(p, i, i - 1, 0.5 * rest, 1.5 * rest)
        for i in range(pinned - 1, -1, -1):
            _clamp_link_py(p, i, i + 1, 0.5 * rest, 1.5 * rest)
    return p


# ------------------------------------------------------------------------ planning


def _segment_free_loops(occ, width, height, cell, x0, y0, x1, y1):
    # exact cell traversal: cells between consecutive grid-line crossings
    x_max = width * cell
    y_max = height * cell
    if x0 < 0.0 or x0 >= x_max or y0 < 0.0 or y0 >= y_max:
        return False
    if x1 < 0.0 or x1 >= x_max or y1 < 0.0 or y1 >= y_max:
        return False
    dx = x1 - x0
    dy = y1 - y0
    ts = np.empty(width + height + 4)
    m = 0
    ts[m] = 0.0
    m += 1
    ts[m] = 1.0
    m += 1
    if dx != 0.0:
        lo = min(x0, x1) / cell
        hi = max(x0, x1) / cell
        k = int(math.floor(lo)) + 1
        while k <= hi:
            t = (k * cell - x0) / dx
            if 0.0 < t < 1.0:
                ts[m] = t
                m += 1
            k += 1
    if dy != 0.0:
        lo = min(y0, y1) / cell
        hi = max(y0, y1) / cell
        k = int(math.floor(lo)) + 1
        while k <= hi:
            t = (k * cell - y0) / dy
            if 0.0 < t < 1.0:
                ts[m] = t
                m += 1
            k += 1
    ts_sorted = np.sort(ts[:m])
    for j in range(m):
        if j == 0:
            t = 0.0
        else:
            t = 0.5 * (ts_sorted[j - 1] + ts_sorted[j])
        px = x0 + t * dx
        py = y0 + t * dy
        cx = int(math.floor(px / cell))
        cy = int(math.floor(py / cell))
        if occ[cy * width + cx] > 0.5:
            return False
    cx = int(math.floor(x1 / cell))
    cy = int(math.floor(y1 / cell))
    return occ[cy * width + cx] <= 0.5


segment_free_nb = njit(_segment_free_loops)


def segment_free_np(occ, width, height, cell, x0, y0, x1, y1):
    """True when the straight segment never enters an occupied cell."""
    x_max, y_max = width * cell, height * cell
    for px, py in ((x0, y0), (x1, y1)):
        if not (0.0 <= px < x_max and 0.0 <= py < y_max):
            return False
    dx, dy = x1 - x0, y1 - y0
    parts = [np.array([0.0, 1.0])]
    if dx != 0.0:
        ks = np.arange(math.floor(min(x0, x1) / cell) + 1, math.floor(max(x0, x1) / cell) + 1)
        parts.append((ks * cell - x0) / dx)
    if dy != 0.0:
        ks = np.arange(math.floor(min(y0, y1) / cell) + 1, math.floor(max(y0, y1) / cell) + 1)
        parts.append((ks * cell - y0) / dy)
    ts = np.concatenate(parts)
    ts = np.sort(ts[(ts >= 0.0) & (ts <= 1.0)])
    probe = np.concatenate([[0.0], 0.5 * (ts[1:] + ts[:-1]), [1.0]])
    cx = np.floor((x0 + probe * dx) / cell).astype(np.int64)
    cy = np.floor((y0 + probe * dy) / cell).astype(np.int64)
    cx[-1] = int(math.floor(x1 / cell))
    cy[-1] = int(math.floor(y1 / cell))
    return not bool(np.any(occ[cy * width + cx] > 0.5))


def _nearest_loops(nodes, n, px, py):
    best = 0
    best_d = np.inf
    for i in range(n):
        dx = nodes[i, 0] - px
        dy = nodes[i, 1] - py
        d = dx * dx + dy * dy
        if d < best_d:
            best_d = d
            best = i
    return best


nearest_node_nb = njit(_nearest_loops)


def nearest_node_np(nodes, n, px, py):
    """Index of the closest of the first ``n`` tree nodes (first on ties)."""
    d = nodes[:n] - np.array([px, py])
    return int(np.argmin(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]))


if HAS_NUMBA:
    BACKEND = "numba"
    maze_transition = maze_transition_nb
    rope_relax = rope_relax_nb
    segment_free = segment_free_nb
    nearest_node = nearest_node_nb
else:
    BACKEND = "numpy"
    maze_transition = maze_transition_np
    rope_relax = rope_relax_np
    segment_free = segment_free_np
    nearest_node = nearest_node_np
