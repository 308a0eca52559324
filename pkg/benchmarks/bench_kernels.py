"""Compiled vs numpy pair search used by the two-target CAML grid scan.

    python benchmarks/bench_kernels.py [--points 2001] [--repeat 3]
"""
import argparse
import time

import numpy as np

from mcisac import kernels
from mcisac.estimation import AngleGrid
from mcisac.model import ArrayManifold, RandomSource, TargetSet


def problem(n_points, seed=0):
    tx = rx = ArrayManifold(10)
    grid = AngleGrid.uniform(n_points, tx, rx)
    rng = RandomSource(seed)
    X = rng.cn(10, 64)
    tg = TargetSet(np.deg2rad([-30.0, 30.0]), [1.0, 1.0])
    Y = tg.response_matrix(tx, rx) @ X + rng.cn(10, 64)
    R = X @ X.conj().T
    c = np.einsum("ng,nm,mg->g", grid.Ar, Y @ X.conj().T, grid.At)
    Q = grid.rx_gram * (grid.At.conj().T @ R @ grid.At).T
    return Q, c


def timeit(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--points", type=int, nargs="+", default=[501, 1001, 2001])
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args()
    print(f"compiled kernel available: {kernels.HAVE_COMPILED}")
    print(f"{'points':>7} {'numpy [s]':>10} {'compiled [s]':>13} {'speedup':>8}  same")
    for n in a.points:
        Q, c = problem(n)
        tp, rp = timeit(lambda: kernels.pair_search_py(Q, c, 1), a.repeat)
        if kernels.HAVE_COMPILED:
            tc, rc = timeit(lambda: kernels.pair_search(Q, c, 1), a.repeat)
            same = rp[:2] == rc[:2]
            print(f"{n:7d} {tp:10.4f} {tc:13.4f} {tp / tc:8.1f}  {same}")
        else:
            print(f"{n:7d} {tp:10.4f} {'-':>13} {'-':>8}")


if __name__ == "__main__":
    main()
