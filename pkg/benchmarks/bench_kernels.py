#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy fallbacks.

Both flavours are imported directly, so ``REGULAB_DISABLE_NUMBA`` does not
matter here. Every case first checks that the two flavours agree, then
reports the best of ``--repeat`` timings (numba compile time excluded by a
warm-up call).

    python benchmarks/bench_kernels.py --repeat 5
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from regulab import kernels
from regulab._jit import HAVE_NUMBA


def _markets(rng, m, n):
    men_pref = np.argsort(rng.random((m, n, n)), axis=2)
    women_order = np.argsort(rng.random((m, n, n)), axis=2)
    women_rank = np.argsort(women_order, axis=2)
    return men_pref.astype(np.int64), women_rank.astype(np.int64)


def _leaves(rng, n_leaves, per_leaf, n_queries):
    sizes = rng.integers(1, 2 * per_leaf, n_leaves)
    offsets = np.r_[0, np.cumsum(sizes)].astype(np.int64)
    knots = np.concatenate([np.sort(rng.random(s)) for s in sizes])
    leaf = rng.integers(0, n_leaves, n_queries).astype(np.int64)
    t = rng.random(n_queries) * 1.2 - 0.1
    return leaf, t, knots, offsets


def _boxes(rng, n_points, n_boxes, d):
    lo = rng.random((n_boxes, d))
    hi = lo + 0.1 * rng.random((n_boxes, d))
    pts = rng.random((n_points, d)) * 2 - 0.5
    return pts, lo, hi


def _best(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def run(repeat: int = 3, seed: int = 0):
    rng = np.random.default_rng(seed)
    cases = [
        ("deferred_acceptance 20000x3", kernels.deferred_acceptance_numba,
         kernels.deferred_acceptance_numpy, _markets(rng, 20_000, 3), True),
        ("deferred_acceptance 2000x8", kernels.deferred_acceptance_numba,
         kernels.deferred_acceptance_numpy, _markets(rng, 2_000, 8), True),
        ("leaf_cdf 1024 leaves, 2e5 queries", kernels.leaf_cdf_numba, kernels.leaf_cdf_numpy,
         _leaves(rng, 1024, 100, 200_000), False),
        ("box_min_distance 1e5 pts, 200 boxes", kernels.box_min_distance_numba,
         kernels.box_min_distance_numpy, _boxes(rng, 100_000, 200, 2), False),
    ]
    rows = []
    for name, fast, slow, args, exact in cases:
        fast(*args)  # compile
        t_fast, a = _best(fast, args, repeat)
        t_slow, b = _best(slow, args, repeat)
        same = np.array_equal(a, b) if exact else np.allclose(a, b, rtol=0, atol=1e-12)
        if not same:
            raise AssertionError(f"{name}: numba and numpy kernels disagree")
        rows.append((name, t_fast, t_slow))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    if not HAVE_NUMBA:
        print("numba is not installed; the 'numba' column times the plain-Python kernels")
    print(f"{'case':40s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s}")
    for name, t_fast, t_slow in run(args.repeat, args.seed):
        print(f"{name:40s} {t_fast:10.4f} {t_slow:10.4f} {t_slow / t_fast:8.1f}x")


if __name__ == "__main__":
    main()
