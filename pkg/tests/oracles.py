"""Independent reference computations used as test oracles.

Nothing here calls into the package's estimators: each oracle is either a
closed form, a numerical integral, or an exhaustive enumeration.
"""

import itertools
import math

import numpy as np
from scipy import integrate, stats


def uniform_bin_masses(edges, a, b):
    """Exact masses of U[a, b] over ``edges`` plus (left, right) overflow."""
    edges = np.asarray(edges, dtype=float)
    lo = np.clip(edges[:-1], a, b)
    hi = np.clip(edges[1:], a, b)
    inner = (hi - lo) / (b - a)
    left = max(0.0, min(edges[0], b) - a) / (b - a)
    right = max(0.0, b - max(edges[-1], a)) / (b - a)
    return inner, left + right


def binned_tv_uniform(edges, a1, a2, width=1.0):
    """Binned TV between U[a1, a1+width] and U[a2, a2+width] on ``edges``.

    Overflow mass is lumped into one bucket per side only when it is zero
    for both laws, which is the situation in the tests.
    """
    p, po = uniform_bin_masses(edges, a1, a1 + width)
    q, qo = uniform_bin_masses(edges, a2, a2 + width)
    return 0.5 * (np.abs(p - q).sum() + abs(po - qo))


def l1_true_tv(x, x0=0.0):
    return min(abs(x - x0), 1.0)


def frac_product_expectation(x):
    """E[frac(x * R)], R ~ U[0,1], by adaptive quadrature with breakpoints."""
    if x == 0:
        return 0.0
    f = lambda r: x * r - math.floor(x * r)
    pts = [k / x for k in range(int(math.floor(min(0, x))), int(math.ceil(max(0, x))) + 1) if 0 < k / x < 1]
    val, _ = integrate.quad(f, 0.0, 1.0, points=pts or None, limit=200)
    return val


def clipped_annulus_area(delta):
    """Area of {p in [0,2]^2 : p not in [0,1]^2, d(p, [0,1]^2) < delta} for delta <= 1."""
    return 2 * delta + math.pi * delta**2 / 4


def clipped_annulus_area_numeric(delta):
    """Same area by numerical integration over the region right/above the unit square."""

    def height(x):
        # for fixed x in [0, 1 + delta], the y-extent of the annulus inside [0, 2]
        if x <= 1:
            return delta
        dx = x - 1
        return 1 + math.sqrt(max(delta**2 - dx**2, 0.0))

    val, _ = integrate.quad(height, 0, 1 + delta, points=[1.0], limit=200)
    return val


def conditional_cdf_shifted(x, t):
    """CDF of R = x + U at t, U ~ U[0,1]."""
    return np.clip(np.asarray(t) - x, 0.0, 1.0)


def stable(men_scores, women_scores, wife):
    n = len(wife)
    husband = np.empty(n, dtype=int)
    husband[list(wife)] = np.arange(n)
    for m in range(n):
        for w in range(n):
            if w == wife[m]:
                continue
            if men_scores[m, w] > men_scores[m, wife[m]] and women_scores[w, m] > women_scores[w, husband[w]]:
                return False
    return True


def brute_force_man_optimal(men_scores, women_scores):
    """Enumerate all bijections, keep the stable ones, return the man-optimal one.

    The man-optimal matching gives every man his best partner among all
    stable matchings; the function checks that such a matching exists.
    """
    n = men_scores.shape[0]
    stables = [np.array(p) for p in itertools.permutations(range(n)) if stable(men_scores, women_scores, p)]
    assert stables, "no stable matching found"
    best = np.array([max(stables, key=lambda s: men_scores[m, s[m]])[m] for m in range(n)])
    assert any(np.array_equal(best, s) for s in stables), "man-optimal matching is not stable"
    return best


def ks_to_cdf(samples, cdf):
    return stats.kstest(np.asarray(samples).ravel(), cdf).statistic
