"""Benchmark the compiled kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--n N] [--repeat K]
"""
import argparse
import timeit

import numpy as np

from tpgmm import _kernels_py, kernels


def make_inputs(n, q1=6, q2=13, seed=0):
    rng = np.random.default_rng(seed)
    x = np.ascontiguousarray(rng.normal(size=(n, q2)))
    z = np.ascontiguousarray(rng.normal(size=(n, q1)))
    y = np.ascontiguousarray((rng.random(n) < 0.3).astype(float))
    pi = np.ascontiguousarray(rng.uniform(0.1, 1.0, size=n))
    off = np.ascontiguousarray(rng.normal(scale=0.5, size=n))
    beta = rng.normal(scale=0.3, size=q2)
    theta = rng.normal(scale=0.3, size=q1)
    return x, z, y, pi, off, beta, theta


def bench(label, fn, repeat):
    times = timeit.repeat(fn, number=1, repeat=repeat)
    best = min(times)
    print(f"  {label:<10s} {best * 1e3:8.3f} ms (best of {repeat})")
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=20000, help="rows in the fixture")
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    backends = kernels.backends()
    if "cython" not in backends:
        print("compiled extension not available; benchmarking python only")

    x, z, y, pi, off, beta, theta = make_inputs(args.n)
    eta = np.ascontiguousarray(x @ beta)
    w = np.ascontiguousarray(1.0 / pi)
    big_n = float(4 * args.n)
    n2 = float(args.n)

    print(f"n = {args.n}, q1 = {z.shape[1]}, q2 = {x.shape[1]}")
    for name in ("moment_pieces", "score_info", "expit_vec"):
        print(f"{name}:")
        results = {}
        for bname, mod in sorted(backends.items()):
            if name == "moment_pieces":
                fn = lambda m=mod: m.moment_pieces(x, z, y, pi, off, beta,
                                                   theta, big_n, n2)
            elif name == "score_info":
                fn = lambda m=mod: m.score_info(x, y, w, eta)
            else:
                fn = lambda m=mod: m.expit_vec(eta)
            results[bname] = bench(bname, fn, args.repeat)
        if len(results) == 2:
            print(f"  speedup    {results['python'] / results['cython']:8.2f}x")


if __name__ == "__main__":
    main()
