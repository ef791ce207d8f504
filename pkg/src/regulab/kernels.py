"""Hot inner loops, each in a numba and a pure-numpy flavour.

The public names (``deferred_acceptance_batch``, ``leaf_cdf``,
``box_min_distance``) bind to the numba versions unless numba is missing or
``REGULAB_DISABLE_NUMBA=1`` was set before import. Both flavours are kept
importable (``*_numba`` / ``*_numpy``) so tests and the benchmark can compare
them directly; they must agree exactly on integer outputs and to rounding on
float outputs.
"""

import numpy as np

from regulab._jit import USE_NUMBA, njit

# --------------------------------------------------------------------------
# deferred acceptance over a batch of markets
# --------------------------------------------------------------------------


@njit(cache=True)
def deferred_acceptance_numba(men_pref, women_rank):
    M, n, _ = men_pref.shape
    wife = np.empty((M, n), np.int64)
    husband = np.empty(n, np.int64)
    nxt = np.empty(n, np.int64)
    free = np.empty(n, np.int64)
    for m in range(M):
        for i in range(n):
            husband[i] = -1
            nxt[i] = 0
            free[i] = n - 1 - i
        top = n
        while top > 0:
            top -= 1
            man = free[top]
            w = men_pref[m, man, nxt[man]]
            nxt[man] += 1
            h = husband[w]
            if h < 0:
                husband[w] = man
            elif women_rank[m, w, man] < women_rank[m, w, h]:
                husband[w] = man
                free[top] = h
                top += 1
            else:
                free[top] = man
                top += 1
        for w in range(n):
            wife[m, husband[w]] = w
    return wife


def deferred_acceptance_numpy(men_pref, women_rank):
    """Men-proposing deferred acceptance, vectorized across markets.

    Men enter one at a time; each entrant's rejection chain runs until some
    woman who was unmatched accepts. Proposal order does not change the
    man-optimal outcome, so this agrees with the queue-based kernel.
    """
    M, n, _ = men_pref.shape
    husband = np.full((M, n), -1, dtype=np.int64)
    nxt = np.zeros((M, n), dtype=np.int64)
    proposer = np.empty(M, dtype=np.int64)
    for entrant in range(n):
        proposer[:] = entrant
        active = np.arange(M)
        while active.size:
            p = proposer[active]
            w = men_pref[active, p, nxt[active, p]]
            nxt[active, p] += 1
            h = husband[active, w]
            vacant = h < 0
            better = ~vacant & (
                women_rank[active, w, p] < women_rank[active, w, np.maximum(h, 0)]
            )
            take = vacant | better
            husband[active[take], w[take]] = p[take]
            proposer[active[better]] = h[better]
            active = active[~vacant]
    wife = np.empty((M, n), dtype=np.int64)
    rows = np.repeat(np.arange(M), n)
    wife[rows, husband.reshape(-1)] = np.tile(np.arange(n), M)
    return wife


# --------------------------------------------------------------------------
# piecewise-linear ECDF lookups: knots[offsets[l]:offsets[l+1]] are the sorted
# samples of leaf l; knot j of a leaf with m knots sits at level j / (m - 1)
# --------------------------------------------------------------------------


@njit(cache=True)
def leaf_cdf_numba(leaf, t, knots, offsets):
    out = np.empty(t.shape[0], np.float64)
    for e in range(t.shape[0]):
        a = offsets[leaf[e]]
        b = offsets[leaf[e] + 1]
        m = b - a
        v = t[e]
        if v <= knots[a]:
            out[e] = 0.0 if m > 1 or v < knots[a] else 1.0
            continue
        if v >= knots[b - 1]:
            out[e] = 1.0
            continue
        lo = a
        hi = b - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if knots[mid] <= v:
                lo = mid
            else:
                hi = mid
        span = knots[hi] - knots[lo]
        frac = (v - knots[lo]) / span if span > 0 else 1.0
        out[e] = ((lo - a) + frac) / (m - 1)
    return out


def leaf_cdf_numpy(leaf, t, knots, offsets):
    out = np.empty(t.shape[0], dtype=float)
    order = np.argsort(leaf, kind="stable")
    sorted_leaf = leaf[order]
    starts = np.flatnonzero(np.r_[True, sorted_leaf[1:] != sorted_leaf[:-1]])
    ends = np.r_[starts[1:], sorted_leaf.size]
    for s, e in zip(starts, ends):
        idx = order[s:e]
        l = sorted_leaf[s]
        k = knots[offsets[l] : offsets[l + 1]]
        m = k.size
        if m == 1:
            out[idx] = (t[idx] >= k[0]).astype(float)
            continue
        out[idx] = np.interp(t[idx], k, np.arange(m) / (m - 1), left=0.0, right=1.0)
    return out


# --------------------------------------------------------------------------
# Euclidean distance from points to a union of closed boxes
# --------------------------------------------------------------------------


@njit(cache=True)
def box_min_distance_numba(points, lo, hi):
    m, d = points.shape
    nb = lo.shape[0]
    out = np.empty(m, np.float64)
    for i in range(m):
        best = np.inf
        for b in range(nb):
            s = 0.0
            for j in range(d):
                v = points[i, j]
                if v < lo[b, j]:
                    g = lo[b, j] - v
                    s += g * g
                elif v > hi[b, j]:
                    g = v - hi[b, j]
                    s += g * g
                if s >= best:
                    break
            if s < best:
                best = s
                if best == 0.0:
                    break
        out[i] = np.sqrt(best)
    return out


def box_min_distance_numpy(points, lo, hi):
    m = points.shape[0]
    nb = lo.shape[0]
    out = np.full(m, np.inf)
    if nb == 0:
        return out
    step = max(1, 4_000_000 // max(nb * points.shape[1], 1))
    for s in range(0, m, step):
        p = points[s : s + step, None, :]
        gap = np.maximum(np.maximum(lo[None] - p, p - hi[None]), 0.0)
        out[s : s + step] = np.sqrt(np.min(np.sum(gap * gap, axis=2), axis=1))
    return out


if USE_NUMBA:
    deferred_acceptance_batch = deferred_acceptance_numba
    leaf_cdf = leaf_cdf_numba
    box_min_distance = box_min_distance_numba
else:
    deferred_acceptance_batch = deferred_acceptance_numpy
    leaf_cdf = leaf_cdf_numpy
    box_min_distance = box_min_distance_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
