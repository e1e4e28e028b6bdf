"""Time the compiled and pure-Python kernels on the same inputs.

    python3 benchmarks/bench_kernels.py [--m 20] [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from ridgeid import kernels
from ridgeid.model import generate_network
from ridgeid.subspace import matrix_space_from_vectors, perturb_subspace


def inputs(m, seed=0):
    A = generate_network(m, m, 1.0, seed=seed).weights
    space = perturb_subspace(matrix_space_from_vectors(A), 0.05, np.random.default_rng(seed))
    Q = space.vec_basis()
    c0 = np.random.default_rng(seed + 1).standard_normal(Q.shape[0])
    return Q, c0 / np.linalg.norm(c0)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--m", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    Q, c0 = inputs(args.m)
    cases = {
        "rank1_iterate (100 steps)": lambda b: kernels.rank1_iterate(Q, c0, 2.0, 100, 0.0, backend=b),
        "pd_ascent (200 iters)": lambda b: kernels.pd_ascent(Q, c0, 200, backend=b),
    }
    print(f"m = {args.m}, best of {args.repeat}; backends: {', '.join(kernels.BACKENDS)}")
    for name, fn in cases.items():
        times = {b: min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat)) for b in kernels.BACKENDS}
        row = "  ".join(f"{b} {1e3 * t:8.2f} ms" for b, t in times.items())
        if "compiled" in times:
            row += f"  speedup {times['python'] / times['compiled']:.1f}x"
        print(f"{name:28s} {row}")


if __name__ == "__main__":
    main()
