"""Compare the compiled and numpy trajectory kernels.

Usage: python benchmarks/bench_kernels.py [--n 2000] [--T 1 20] [--repeat 3]

Reports wall time per backend and the largest difference in final positions.
"""
import argparse
import time

import numpy as np

from lcskit import _backend
from lcskit.dynamics import IntegratorParams, integrate_points, nonlinear_saddle


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000, help="trajectories per run")
    ap.add_argument("--T", type=float, nargs="+", default=[1.0, 20.0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)

    if _backend.ckernels is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e .` first")
    vf = nonlinear_saddle()
    ip = IntegratorParams()
    pts = np.random.default_rng(0).uniform(-1, 1, (args.n, 2))
    print(f"{'T':>6} {'backend':>8} {'seconds':>10} {'traj/s':>10} {'speedup':>8} {'max |dx|':>10}")
    for T in args.T:
        tc, (xc, _, _) = best_of(lambda: integrate_points(vf, pts, 0.0, T, ip, threads=args.threads),
                                 args.repeat)
        tp, (xp, _, _) = best_of(lambda: integrate_points(vf, pts, 0.0, T, ip, threads=args.threads,
                                                          force_python=True), args.repeat)
        diff = float(np.max(np.abs(xc - xp)))
        print(f"{T:6g} {'cython':>8} {tc:10.4f} {args.n / tc:10.0f} {tp / tc:8.1f} {diff:10.2e}")
        print(f"{T:6g} {'numpy':>8} {tp:10.4f} {args.n / tp:10.0f} {1.0:8.1f}")


if __name__ == "__main__":
    main()
