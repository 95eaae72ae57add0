"""Compiled vs pure-Python walk-on-spheres throughput.

    python3 benchmarks/bench_wos.py [--walks 20000] [--dim 4] [--repeat 3]

Both backends consume the same counter-based random stream, so besides
timing the script checks that they return the same exit points.
"""
import argparse
import time

import numpy as np

from eulerhopf import _sdf, wos


def shapes(n):
    yield "ball", _sdf.BALL, np.r_[np.zeros(n), 1.0]
    yield "ellipsoid", _sdf.ELLIPSOID, np.r_[np.zeros(n), np.linspace(1.0, 0.6, n)]
    yield "rounded_box", _sdf.ROUNDED_BOX, np.r_[np.zeros(n), np.full(n, 0.8), 0.1]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--walks", type=int, default=20_000)
    ap.add_argument("--dim", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--shell", type=float, default=2e-4)
    args = ap.parse_args(argv)

    backends = wos.available_backends()
    if "compiled" not in backends:
        print("compiled kernel not built; run `pip install -e . --no-build-isolation` first")
    start = np.full(args.dim, 0.1)
    print(f"{'shape':<12} {'backend':<9} {'seconds':>9} {'walks/s':>12} {'mean steps':>11}")
    for name, kind, params in shapes(args.dim):
        ref = None
        rates = {}
        for b in backends:
            t, (ex, steps, trunc) = best_of(
                lambda: wos.walk_exits(kind, params, start, 7, args.walks, args.shell, 10_000,
                                       backend=b), args.repeat)
            rates[b] = args.walks / t
            print(f"{name:<12} {b:<9} {t:9.3f} {rates[b]:12.0f} {steps.mean():11.1f}")
            if ref is None:
                ref = ex
            else:
                diff = np.abs(ex - ref).max()
        if len(rates) == 2:
            print(f"{name:<12} speedup   {rates['compiled'] / rates['python']:9.1f}x"
                  f"   max exit difference {diff:.1e}")


if __name__ == "__main__":
    main()
