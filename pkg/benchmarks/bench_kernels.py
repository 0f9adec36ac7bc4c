"""Compare the compiled kernels with the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from sepapprox import _kernels_py

try:
    from sepapprox import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def cases(rng):
    N, M = 16, 20000
    nodes = np.sort(np.concatenate([[1.0, 1000.0], rng.uniform(1, 1000, N - 2)]))
    flat = rng.standard_normal((N, N, N, N, 4))
    q = rng.uniform(1, 1000, (M, 4))
    G = rng.standard_normal((M, 4)) * 0.1
    g = rng.standard_normal((M, 2))
    area = np.full(M, 1e-3)
    delta = rng.uniform(-1, 1, M)
    m, k = 20000, 12
    indptr = np.arange(0, m * k + 1, k, dtype=np.int64)
    indices = rng.integers(0, m, m * k).astype(np.int64)
    weights = rng.uniform(0, 1, m * k)
    values = rng.uniform(1, 1000, m)
    return {
        "interp_gamma": lambda mod: mod.interp_gamma(flat, nodes, q),
        "rational_correction": lambda mod: mod.rational_correction(G, g, area, delta),
        "holder_means": lambda mod: mod.holder_means(indptr, indices, weights, values, -0.5,
                                                     values),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':22s} {'numpy [ms]':>11s} {'compiled [ms]':>14s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat))
        if _kernels_c is None:
            print(f"{name:22s} {1e3 * t_py:11.2f} {'n/a':>14s}")
            continue
        t_c = min(timeit.repeat(lambda: fn(_kernels_c), number=1, repeat=args.repeat))
        a, b = fn(_kernels_py), fn(_kernels_c)
        a, b = (a[0], b[0]) if isinstance(a, tuple) else (a, b)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-14), name
        print(f"{name:22s} {1e3 * t_py:11.2f} {1e3 * t_c:14.2f} {t_py / t_c:7.1f}x")


if __name__ == "__main__":
    main()
