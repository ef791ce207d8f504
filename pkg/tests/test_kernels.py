import json
import os
import subprocess
import sys

import numpy as np
from hypothesis import given
from hypothesis import strategies as st
from oracles import brute_force_man_optimal

from regulab import kernels


def _markets(rng, m, n):
    men_pref = np.argsort(rng.random((m, n, n)), axis=2).astype(np.int64)
    women_rank = np.argsort(np.argsort(rng.random((m, n, n)), axis=2), axis=2).astype(np.int64)
    return men_pref, women_rank


@given(st.integers(0, 2**32 - 1), st.integers(1, 7), st.integers(1, 40))
def test_deferred_acceptance_flavours_agree(seed, n, m):
    args = _markets(np.random.default_rng(seed), m, n)
    a = kernels.deferred_acceptance_numba(*args)
    b = kernels.deferred_acceptance_numpy(*args)
    assert np.array_equal(a, b)
    # a perfect matching: every woman used exactly once
    assert np.all(np.sort(a, axis=1) == np.arange(n))


def test_deferred_acceptance_is_man_optimal_stable():
    men_pref, women_rank = _markets(np.random.default_rng(0), 200, 4)
    wives = kernels.deferred_acceptance_batch(men_pref, women_rank)
    n = 4
    for k in range(200):
        # convert orders to scores so the brute-force oracle can consume them
        men_scores = np.empty((n, n))
        for m in range(n):
            men_scores[m, men_pref[k, m]] = np.arange(n, 0, -1)
        women_scores = -women_rank[k].astype(float)
        assert wives[k].tolist() == list(brute_force_man_optimal(men_scores, women_scores))


@given(st.integers(0, 2**32 - 1), st.integers(1, 30), st.integers(1, 200))
def test_leaf_cdf_flavours_agree(seed, n_leaves, n_queries):
    rng = np.random.default_rng(seed)
    sizes = rng.integers(1, 12, n_leaves)
    offsets = np.r_[0, np.cumsum(sizes)].astype(np.int64)
    knots = np.concatenate([np.sort(rng.random(s)) for s in sizes])
    leaf = rng.integers(0, n_leaves, n_queries).astype(np.int64)
    t = rng.random(n_queries) * 1.4 - 0.2
    a = kernels.leaf_cdf_numba(leaf, t, knots, offsets)
    b = kernels.leaf_cdf_numpy(leaf, t, knots, offsets)
    assert np.allclose(a, b, rtol=0, atol=1e-12)
    assert np.all((a >= 0) & (a <= 1))


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 20))
def test_box_min_distance_flavours_agree(seed, d, n_boxes):
    rng = np.random.default_rng(seed)
    lo = rng.random((n_boxes, d))
    hi = lo + 0.2 * rng.random((n_boxes, d))
    pts = rng.random((50, d)) * 2 - 0.5
    a = kernels.box_min_distance_numba(pts, lo, hi)
    b = kernels.box_min_distance_numpy(pts, lo, hi)
    assert np.allclose(a, b, rtol=0, atol=1e-12)
    # oracle: distance to the nearest clipped point over all boxes
    ref = np.min(
        np.linalg.norm(pts[:, None, :] - np.clip(pts[:, None, :], lo[None], hi[None]), axis=2), axis=1
    )
    assert np.allclose(a, ref, atol=1e-12)


_CHILD = """
import json, numpy as np
from regulab import kernels
from regulab.scenarios.matching import MarketSpec, matching_regularity_probe
rng = np.random.default_rng(3)
mp = np.argsort(rng.random((50, 4, 4)), axis=2).astype(np.int64)
wr = np.argsort(np.argsort(rng.random((50, 4, 4)), axis=2), axis=2).astype(np.int64)
tab = matching_regularity_probe(MarketSpec(), [0.0, 0.0], [0.5, 0.1], 300, 4)
print(json.dumps({"backend": kernels.BACKEND,
                  "da": kernels.deferred_acceptance_batch(mp, wr).tolist(),
                  "probe": tab.fractions}))
"""


def _run_child(disable):
    env = dict(os.environ)
    env.pop("REGULAB_DISABLE_NUMBA", None)
    if disable:
        env["REGULAB_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", _CHILD], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def test_disable_flag_selects_numpy_and_preserves_results():
    slow = _run_child(True)
    fast = _run_child(False)
    assert slow["backend"] == "numpy"
    assert fast["backend"] == "numba"
    assert slow["da"] == fast["da"]
    assert slow["probe"] == fast["probe"]
