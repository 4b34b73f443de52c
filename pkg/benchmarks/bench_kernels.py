"""Operator-norm throughput: compiled kernel against the numpy fallback and LAPACK.

    python benchmarks/bench_kernels.py [--n 20000] [--sizes 2,3,4,6,8]
"""

import argparse
import time

import numpy as np

from fdcstar import kernels


def _time(fn, stack, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(stack)
        best = min(best, time.perf_counter() - t0)
    return best


def lapack(stack):
    return np.linalg.norm(stack, ord=2, axis=(1, 2))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--sizes", default="2,3,4,6,8")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"backend: {kernels.BACKEND}")
    print(f"{'k':>3} {'compiled us':>12} {'fallback us':>12} {'lapack us':>10} {'max err':>9}")
    for k in (int(s) for s in args.sizes.split(",")):
        stack = rng.normal(size=(args.n, k, k)) + 1j * rng.normal(size=(args.n, k, k))
        ref = lapack(stack)
        err = np.max(np.abs(kernels.opnorms(stack) - ref) / ref)
        per = 1e6 / args.n
        t_c = _time(kernels.opnorms, stack, args.repeat) * per
        t_f = _time(kernels.fallback_opnorms, stack, args.repeat) * per
        t_l = _time(lapack, stack, args.repeat) * per
        print(f"{k:>3} {t_c:>12.3f} {t_f:>12.3f} {t_l:>10.3f} {err:>9.1e}")


if __name__ == "__main__":
    main()
