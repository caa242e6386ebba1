"""Time the compiled and numpy kernel backends on annealer-sized inputs.

    python3 benchmarks/bench_kernels.py [--models 16] [--points 501] [--nodes 401]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from witsda import kernels
from witsda.quadrature import uniform_grid


def _best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--models", type=int, default=16)
    ap.add_argument("--points", type=int, default=501)
    ap.add_argument("--nodes", type=int, default=401)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    centers = rng.normal(0.0, 8.0, (args.models, args.points))
    coefs = rng.uniform(size=(2, args.models, args.points))
    grid = uniform_grid(-35.0, 35.0, args.nodes)
    tables = rng.normal(size=(3, args.points, args.nodes))

    print(f"models={args.models} points={args.points} nodes={args.nodes}")
    results = {}
    for name in kernels.available_backends():
        t_mix = _best_of(lambda: kernels.gauss_mix(centers, coefs, grid, 1.0, backend=name), args.repeat)
        t_exp = _best_of(lambda: kernels.gauss_expect(centers, tables, grid, 1.0, True, backend=name), args.repeat)
        results[name] = (t_mix, t_exp)
        print(f"{name:>7}: gauss_mix {t_mix * 1e3:8.2f} ms   gauss_expect {t_exp * 1e3:8.2f} ms")
    if len(results) == 2:
        (cm, ce), (pm, pe) = results["cython"], results["python"]
        print(f"speedup: gauss_mix x{pm / cm:.1f}   gauss_expect x{pe / ce:.1f}")
        a = kernels.gauss_expect(centers, tables, grid, 1.0, True, backend="cython")
        b = kernels.gauss_expect(centers, tables, grid, 1.0, True, backend="python")
        print(f"max abs difference: {max(np.max(np.abs(x - y)) for x, y in zip(a, b)):.2e}")


if __name__ == "__main__":
    main()
