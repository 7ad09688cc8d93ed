"""Time every kernel on its numba path against its pure-numpy path.

    python3 benchmarks/bench_kernels.py [--repeat 20]

With ``CRISP_NO_NUMBA=1`` the ``*_nb`` names are the plain Python loops, so
the "numba" column then measures interpreted loops.
"""
import argparse
import time

import numpy as np

from crisp import kernels
from crisp.envs import generate_maze


def _time(fn, repeat):
    fn()  # warm-up (includes JIT compilation)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases():
    rng = np.random.default_rng(0)
    spec = generate_maze(0)
    occ = spec.occupancy().ravel().astype(np.float64)
    free = np.argwhere(spec.occupancy() == 0)
    pos = (free[rng.integers(len(free), size=4096)][:, ::-1] + rng.uniform(0.1, 0.9, (4096, 2))).astype(np.float64)
    states = np.concatenate([pos, np.tile(occ, (4096, 1))], axis=1)
    actions = rng.uniform(-1, 1, (4096, 2))
    joints = np.cumsum(np.full((12, 2), [0.1, 0.0]), axis=0)
    pinned = 3
    nodes = rng.uniform(0, 8, (5000, 2))
    segs = rng.uniform(0, 8, (200, 4))

    def seg_loop(f):
        return lambda: [f(occ, 8, 8, 1.0, *s) for s in segs]

    def near_loop(f):
        return lambda: [f(nodes, 5000, *p) for p in segs[:, :2]]

    return [
        ("maze_transition x4096", lambda: kernels.maze_transition_nb(states, actions, 0.25, 8, 8, 1.0),
         lambda: kernels.maze_transition_np(states, actions, 0.25, 8, 8, 1.0)),
        ("rope_relax 12 joints x50 iters", lambda: kernels.rope_relax_nb(joints, pinned, 0.1, 50),
         lambda: kernels.rope_relax_np(joints, pinned, 0.1, 50)),
        ("segment_free x200", seg_loop(kernels.segment_free_nb), seg_loop(kernels.segment_free_np)),
        ("nearest_node 5000 nodes x200", near_loop(kernels.nearest_node_nb), near_loop(kernels.nearest_node_np)),
    ]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    print(f"backend selected by default: {kernels.BACKEND}")
    print(f"{'kernel':34s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, nb, np_ in cases():
        a = _time(nb, args.repeat) * 1e3
        b = _time(np_, args.repeat) * 1e3
        print(f"{name:34s} {a:10.3f} {b:10.3f} {b / a:8.1f}x")


if __name__ == "__main__":
    main()
