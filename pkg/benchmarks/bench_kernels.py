"""Time the numba and numpy backends of the sub-level-set kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import math
import os
import time

import numpy as np

from flatcone import _kernels as K


def make_nodes(count, seed=0):
    rng = np.random.default_rng(seed)
    tot = rng.uniform(0.8, 1.8 * math.pi, count)
    aa = tot * rng.uniform(0.3, 0.7, count)
    return {
        "coef": rng.uniform(0.1, 1.0, count),
        "x0": rng.uniform(0.0, 0.5, count),
        "phi1c": tot * rng.uniform(0.2, 0.8, count),
        "aa": aa,
        "ab": tot - aa,
        "qc": rng.uniform(-0.2, 0.4, count),
        "bt": np.full(count, np.inf),
    }


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--nodes", type=int, default=256)
    ap.add_argument("--points", type=int, default=2048)
    args = ap.parse_args()
    t, w = K.gauss_legendre(48)
    nodes = make_nodes(args.nodes)
    P = np.linspace(0.01, 4.0, args.points)
    print(f"numba available: {K.HAVE_NUMBA}, FLATCONE_DISABLE_NUMBA={os.environ.get('FLATCONE_DISABLE_NUMBA', '')!r}")
    backends = ["numpy"] + (["numba"] if K.HAVE_NUMBA else [])
    ref = None
    for b in backends:
        for mode in (0, 1):
            K.batched_cut(nodes, P[:8], mode, 0.1, t, w, backend=b)  # compile / warm up
            sec = best_of(lambda: K.batched_cut(nodes, P, mode, 0.1, t, w, backend=b), args.repeat)
            out = K.batched_cut(nodes, P, mode, 0.1, t, w, backend=b)
            if ref is None or mode not in ref:
                ref = {**(ref or {}), mode: out}
            dev = float(np.max(np.abs(out - ref[mode])))
            print(f"{b:>6} mode {mode}: {sec * 1e3:9.2f} ms  ({args.nodes} nodes x {args.points} points), "
                  f"max dev vs numpy {dev:.1e}")


if __name__ == "__main__":
    main()
