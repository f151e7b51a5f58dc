#!/usr/bin/env python3
"""Benchmark the compiled joint-table kernel against the numpy fallback.

The kernel fills the full 2**n state table of a binary network; it is
the hot inner loop of every oracle check.  Both backends execute the
same multiplication order, so outputs are asserted bit-identical before
timing.

Usage: python benchmarks/bench_joint.py [n_vars ...]
"""

import sys
import time

import numpy as np

from echelon import _joint_py

try:
    from echelon import _joint as _joint_c
except ImportError:
    _joint_c = None


def random_packed(n, seed=0):
    """A random n-variable network in packed-array form: each variable
    takes up to two of the preceding variables as parents."""
    rng = np.random.default_rng(seed)
    offsets, flat, toff, pflat = [0], [], [], []
    for v in range(n):
        n_parents = int(rng.integers(0, min(v, 2) + 1))
        parents = sorted(rng.choice(v, size=n_parents, replace=False)) if n_parents else []
        flat.extend(int(p) for p in parents)
        offsets.append(len(flat))
        toff.append(len(pflat))
        pflat.extend(rng.uniform(0.05, 0.95, size=1 << n_parents))
    return (
        n,
        np.array(offsets, dtype=np.int32),
        np.array(flat, dtype=np.int32),
        np.array(toff, dtype=np.int32),
        np.array(pflat, dtype=np.float64),
    )


def time_fill(impl, packed, repeats):
    n = packed[0]
    out = np.empty(1 << n)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        impl.fill_joint(*packed, out)
        best = min(best, time.perf_counter() - t0)
    return best, out.copy()


def main():
    sizes = [int(a) for a in sys.argv[1:]] or [12, 16, 18, 20]
    print(f"{'vars':>5} {'states':>9} {'python':>12} {'compiled':>12} {'speedup':>8}")
    for n in sizes:
        packed = random_packed(n)
        repeats = 3 if n >= 18 else 10
        t_py, out_py = time_fill(_joint_py, packed, repeats)
        if _joint_c is None:
            print(f"{n:5d} {1 << n:9d} {t_py * 1e3:10.2f}ms {'(not built)':>12}")
            continue
        t_c, out_c = time_fill(_joint_c, packed, repeats)
        assert np.array_equal(out_py, out_c), "backend outputs differ"
        print(
            f"{n:5d} {1 << n:9d} {t_py * 1e3:10.2f}ms {t_c * 1e3:10.2f}ms "
            f"{t_py / t_c:7.1f}x"
        )
    if _joint_c is None:
        print("compiled kernel unavailable; install without ECHELON_PURE_PYTHON=1")


if __name__ == "__main__":
    main()
