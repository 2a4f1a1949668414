"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from diarmetric import _kernels_py as py

try:
    from diarmetric import _kernels as cy
except ImportError:
    cy = None


def cases(rng):
    Z = rng.normal(size=(32, 32))
    big = rng.normal(size=(600, 32))
    C = rng.normal(size=(8, 32))
    tuples = np.array([rng.choice(32, size=3, replace=False) for _ in range(96)], dtype=np.int64)
    quads = np.array([rng.choice(32, size=4, replace=False) for _ in range(96)], dtype=np.int64)
    return [
        ("pairwise_sq_dists 32x32", "pairwise_sq_dists", (Z,)),
        ("pairwise_sq_dists 600x32", "pairwise_sq_dists", (big,)),
        ("lloyd_assign 600x32, k=8", "lloyd_assign", (big, C)),
        ("tuple_hinge 96 triplets", "tuple_hinge", (Z, tuples, 0.8, 0.4)),
        ("tuple_hinge 96 quadruplets", "tuple_hinge", (Z, quads, 0.8, 0.4)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    if cy is None:
        print("compiled kernels not built; timing the numpy fallback only")
    print(f"{'kernel':<28} {'python us':>10} {'cython us':>10} {'speedup':>8}")
    for name, fn, fargs in cases(rng):
        row = []
        for mod in (py, cy):
            if mod is None:
                row.append(None)
                continue
            f = getattr(mod, fn)
            timer = timeit.Timer(lambda: f(*fargs))
            n, _ = timer.autorange()
            row.append(min(timer.repeat(args.repeat, n)) / n * 1e6)
        p, c = row
        cell = "n/a" if c is None else f"{c:10.1f}"
        speed = "" if c is None else f"{p / c:7.1f}x"
        print(f"{name:<28} {p:10.1f} {cell:>10} {speed:>8}")


if __name__ == "__main__":
    main()
