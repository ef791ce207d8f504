"""Distances between empirical laws and measure-theoretic desk tools.

Total variation is estimated over the sigma-algebra generated by a regular
histogram grid (or a label set), which makes every estimate here a *binned*
TV: a lower bound on the true supremum over all measurable sets, up to
Monte-Carlo noise.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from regulab import kernels
from regulab.dgp import ConditionalLaw, Factorization, evaluate_common
from regulab.errors import ConfigError, DataError, RegulabError
from regulab.sampling import as_seed

# ---------------------------------------------------------------------------
# binned laws
# ---------------------------------------------------------------------------


class BinningMismatchError(RegulabError):
    """Two binned laws do not share edges or labels."""


@dataclass(frozen=True)
class BinnedLaw:
    """Histogram probabilities on a shared grid (or label set) plus overflow mass."""

    probs: np.ndarray
    edges: Optional[tuple] = None
    labels: Optional[tuple] = None
    overflow: float = 0.0
    n: int = 0

    def __post_init__(self):
        total = float(self.probs.sum()) + self.overflow
        if np.any(self.probs < 0) or abs(total - 1.0) > 1e-9:
            raise DataError(f"binned law probabilities must be >= 0 and sum to 1 (got {total!r})")

    @property
    def discrete(self) -> bool:
        return self.labels is not None

    def compatible(self, other: "BinnedLaw") -> bool:
        if self.discrete or other.discrete:
            return self.labels == other.labels
        return len(self.edges) == len(other.edges) and all(
            np.array_equal(a, b) for a, b in zip(self.edges, other.edges)
        )

    def centers(self) -> np.ndarray:
        """Bin centers as an ``(n_bins, d)`` array in C order of ``probs``."""
        mids = [0.5 * (e[1:] + e[:-1]) for e in self.edges]
        mesh = np.meshgrid(*mids, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)


def default_bins(dimension: int) -> int:
    if dimension <= 2:
        return 20
    if dimension == 3:
        return 8
    raise ConfigError("bins", f"latent dimension {dimension} > 3 requires an explicit bin count")


def _as_rows(samples) -> np.ndarray:
    if isinstance(samples, ConditionalLaw):
        samples = samples.samples
    arr = np.asarray(samples, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def regular_edges(sample_sets: Sequence, bins=None, lo=None, hi=None) -> tuple:
    """Regular grid over the pooled bounding box of ``sample_sets``.

    A degenerate range (all samples equal) is widened to unit width.
    """
    rows = [_as_rows(s) for s in sample_sets]
    d = rows[0].shape[1]
    if bins is None:
        bins = default_bins(d)
    bins = np.broadcast_to(np.asarray(bins, dtype=int), (d,))
    if lo is None:
        lo = np.min([r.min(axis=0) for r in rows], axis=0)
    if hi is None:
        hi = np.max([r.max(axis=0) for r in rows], axis=0)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (d,)).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (d,)).copy()
    flat = hi <= lo
    lo[flat] -= 0.5
    hi[flat] += 0.5
    return tuple(np.linspace(lo[j], hi[j], int(bins[j]) + 1) for j in range(d))


def bin_samples(samples, edges) -> BinnedLaw:
    """Normalized histogram on ``edges``; samples outside go to one overflow bin.

    The rightmost edge is inclusive.
    """
    rows = _as_rows(samples)
    m = rows.shape[0]
    if m == 0:
        raise DataError("cannot bin zero samples")
    if rows.shape[1] != len(edges):
        raise BinningMismatchError("sample dimension does not match the edges")
    shape = tuple(len(e) - 1 for e in edges)
    idx = np.empty_like(rows, dtype=np.int64)
    inside = np.ones(m, dtype=bool)
    for j, e in enumerate(edges):
        v = rows[:, j]
        k = np.searchsorted(e, v, side="right") - 1
        k[v == e[-1]] = len(e) - 2
        inside &= (k >= 0) & (k < len(e) - 1)
        idx[:, j] = k
    flat = np.ravel_multi_index(tuple(idx[inside].T), shape) if inside.any() else np.zeros(0, int)
    counts = np.bincount(flat, minlength=int(np.prod(shape))).reshape(shape)
    overflow = m - int(inside.sum())
    return BinnedLaw(counts / m, tuple(np.asarray(e) for e in edges), None, overflow / m, m)


def bin_labels(samples, labels: Sequence) -> BinnedLaw:
    """Frequencies over a label universe; unknown labels go to overflow."""
    vals = np.asarray(samples.samples if isinstance(samples, ConditionalLaw) else samples)
    vals = vals.reshape(-1)
    if vals.size == 0:
        raise DataError("cannot bin zero samples")
    labels = tuple(labels)
    lookup = {lab: i for i, lab in enumerate(labels)}
    counts = np.zeros(len(labels))
    overflow = 0
    uniq, cnt = np.unique(vals, return_counts=True)
    for u, c in zip(uniq.tolist(), cnt):
        if u in lookup:
            counts[lookup[u]] += c
        else:
            overflow += c
    return BinnedLaw(counts / vals.size, None, labels, overflow / vals.size, vals.size)


def tv(p: BinnedLaw, q: BinnedLaw) -> float:
    """Binned total variation ``(1/2) * sum |p_i - q_i|``, overflow included."""
    if not p.compatible(q):
        raise BinningMismatchError("tv needs laws on identical edges or labels")
    return float(0.5 * (np.abs(p.probs - q.probs).sum() + abs(p.overflow - q.overflow)))


def binned_tv(a, b, bins=None, discrete: bool = False):
    """Binned TV between two sample sets on a pooled grid.

    Returns:
        ``(tv, edges_or_labels)``.
    """
    if discrete:
        va = np.asarray(a.samples if isinstance(a, ConditionalLaw) else a).reshape(-1)
        vb = np.asarray(b.samples if isinstance(b, ConditionalLaw) else b).reshape(-1)
        labels = tuple(np.unique(np.concatenate([va, vb])).tolist())
        return tv(bin_labels(va, labels), bin_labels(vb, labels)), labels
    edges = regular_edges([a, b], bins)
    return tv(bin_samples(a, edges), bin_samples(b, edges)), edges


def ks_uniform(values) -> float:
    """Kolmogorov-Smirnov statistic of ``values`` against U[0, 1]."""
    return float(stats.kstest(np.asarray(values, dtype=float).reshape(-1), "uniform").statistic)


# ---------------------------------------------------------------------------
# TV limit probe
# ---------------------------------------------------------------------------


def probe_directions(dimension: int, seed, n_random: Optional[int] = None) -> np.ndarray:
    """``+-e_i`` plus ``2 * dimension`` random unit directions (none in 1-D)."""
    eye = np.eye(dimension)
    dirs = [eye, -eye]
    if n_random is None:
        n_random = 2 * dimension if dimension > 1 else 0
    if n_random:
        g = as_seed(seed).generator().standard_normal((n_random, dimension))
        dirs.append(g / np.linalg.norm(g, axis=1, keepdims=True))
    return np.concatenate(dirs, axis=0)


def probe_points(fact: Factorization, x0, radius: float, directions: np.ndarray):
    x0 = fact.point(x0)
    pts = x0[None, :] + radius * directions
    keep = fact.input_domain.contains(pts)
    return pts[keep]


@dataclass
class TVRow:
    radius: float
    tv: float
    worst_point: tuple
    point_tvs: list
    edges: tuple


@dataclass
class TVProbeTable:
    x0: tuple
    rows: list
    bins: int
    n: int
    metadata: dict = field(default_factory=dict)

    @property
    def radii(self):
        return [r.radius for r in self.rows]

    @property
    def tvs(self):
        return [r.tv for r in self.rows]

    def to_records(self):
        return [
            {"radius": r.radius, "binned_tv": r.tv, "worst_point": list(r.worst_point)}
            for r in self.rows
        ]


def tv_limit_probe(
    fact: Factorization,
    x0,
    radii: Sequence[float],
    n: int,
    seed,
    bins: Optional[int] = None,
    n_random_directions: Optional[int] = None,
) -> TVProbeTable:
    """Sup of binned TV between the law at ``x0`` and laws at each radius.

    All inputs share one noise draw (common random numbers). The grid for a
    radius is fixed from the pooled samples of ``x0`` and that radius's probe
    points.
    """
    seed = as_seed(seed)
    radii = [float(r) for r in radii]
    if any(r <= 0 for r in radii):
        raise ConfigError("radii", "probe radii must be positive")
    x0 = fact.point(x0)
    dirs = probe_directions(fact.input_dim, seed.split(1), n_random_directions)
    per_radius = [probe_points(fact, x0, r, dirs) for r in radii]
    for r, pts in zip(radii, per_radius):
        if len(pts) == 0:
            raise ConfigError("radii", f"no probe point at radius {r} lies inside the domain")
    all_points = [x0] + [p for pts in per_radius for p in pts]
    _, thetas, resampled = evaluate_common(fact, all_points, n, seed.split(0))
    discrete = fact.latent.kind == "discrete"
    if bins is None and not discrete:
        bins = default_bins(fact.latent.dimension)
    base = thetas[0]
    rows = []
    k = 1
    for r, pts in zip(radii, per_radius):
        group = thetas[k : k + len(pts)]
        k += len(pts)
        if discrete:
            labels = tuple(np.unique(np.concatenate([base] + group)).tolist())
            ref = bin_labels(base, labels)
            vals = [tv(ref, bin_labels(g, labels)) for g in group]
            grid = labels
        else:
            grid = regular_edges([base] + group, bins)
            ref = bin_samples(base, grid)
            vals = [tv(ref, bin_samples(g, grid)) for g in group]
        worst = int(np.argmax(vals))
        rows.append(TVRow(r, float(vals[worst]), tuple(pts[worst].tolist()), vals, grid))
    return TVProbeTable(
        tuple(x0.tolist()),
        rows,
        0 if discrete else int(bins),
        int(n),
        {
            "estimator": "binned TV (lower bound on true TV)",
            "coupling": "common random numbers",
            "resampled": resampled,
        },
    )


# ---------------------------------------------------------------------------
# curve continuity evidence
# ---------------------------------------------------------------------------


@dataclass
class Jump:
    location: float
    size: float
    left: float
    right: float
    index: int


@dataclass
class CurveReport:
    grid: list
    values: list
    modulus: list
    jumps: list
    jump_threshold: float
    z: float

    @property
    def max_modulus(self) -> float:
        return max((m for _, m in self.modulus), default=0.0)


def modulus_and_jumps(
    xs,
    values,
    stderr=None,
    jump_threshold: float = 0.1,
    z: float = 6.0,
    deltas=None,
) -> CurveReport:
    """Empirical modulus of continuity and a jump scan over adjacent points.

    A jump between neighbours ``i, i+1`` is flagged when their gap exceeds
    ``max(jump_threshold, z * sqrt(se_i**2 + se_{i+1}**2))``.
    """
    xs = np.asarray(xs, dtype=float)
    vals = np.asarray(values, dtype=float)
    se = np.zeros_like(vals) if stderr is None else np.asarray(stderr, dtype=float)
    if xs.ndim != 1 or xs.shape != vals.shape or se.shape != vals.shape:
        raise DataError("xs, values and stderr must be equal-length 1-D sequences")
    if np.any(np.diff(xs) <= 0):
        raise DataError("grid must be strictly increasing")
    if deltas is None:
        if xs.size > 1:
            h = float(np.min(np.diff(xs)))
            span = float(xs[-1] - xs[0])
            deltas = [h * 2**k for k in range(64) if h * 2**k <= span * (1 + 1e-12)]
        else:
            deltas = []
    dx = np.abs(xs[:, None] - xs[None, :])
    dv = np.abs(vals[:, None] - vals[None, :])
    modulus = []
    for d in sorted(float(d) for d in deltas):
        mask = dx <= d * (1 + 1e-9)
        modulus.append((d, float(dv[mask].max())))
    jumps = []
    for i in range(xs.size - 1):
        gap = vals[i + 1] - vals[i]
        thr = max(jump_threshold, z * float(np.hypot(se[i], se[i + 1])))
        if abs(gap) > thr:
            jumps.append(
                Jump(float(0.5 * (xs[i] + xs[i + 1])), float(abs(gap)), float(vals[i]), float(vals[i + 1]), i)
            )
    return CurveReport(xs.tolist(), vals.tolist(), modulus, jumps, jump_threshold, z)


# ---------------------------------------------------------------------------
# box sets, annulus mass, box covers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoxSet:
    """Finite union of closed axis-aligned boxes ``[lo_b, hi_b]``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.ndim == 1:
            lo, hi = lo[None, :], hi[None, :]
        if lo.shape != hi.shape:
            raise ConfigError("boxes", "lo and hi must have equal shapes")
        if lo.size and not np.all(lo < hi):
            raise ConfigError("boxes", "each box needs lo < hi componentwise")
        object.__setattr__(self, "lo", np.ascontiguousarray(lo))
        object.__setattr__(self, "hi", np.ascontiguousarray(hi))

    @classmethod
    def empty(cls, dimension: int):
        return cls(np.zeros((0, dimension)), np.zeros((0, dimension)))

    def __len__(self):
        return self.lo.shape[0]

    @property
    def dimension(self) -> int:
        return self.lo.shape[1]

    def distance(self, points) -> np.ndarray:
        pts = np.ascontiguousarray(_as_rows(points))
        if len(self) == 0:
            return np.full(pts.shape[0], np.inf)
        return kernels.box_min_distance(pts, self.lo, self.hi)

    def contains(self, points) -> np.ndarray:
        return self.distance(points) == 0.0

    def volume(self) -> float:
        """Exact union volume by coordinate compression."""
        if len(self) == 0:
            return 0.0
        axes = [np.unique(np.concatenate([self.lo[:, j], self.hi[:, j]])) for j in range(self.dimension)]
        covered = np.zeros(tuple(a.size - 1 for a in axes), dtype=bool)
        for lo, hi in zip(self.lo, self.hi):
            sl = tuple(
                slice(np.searchsorted(a, lo[j]), np.searchsorted(a, hi[j]))
                for j, a in enumerate(axes)
            )
            covered[sl] = True
        widths = np.ix_(*[np.diff(a) for a in axes])
        cell = widths[0]
        for w in widths[1:]:
            cell = cell * w
        return float(np.sum(cell * covered))


def annulus_mass(J: BoxSet, law, delta: float) -> float:
    """Mass of ``{theta not in J : d(theta, J) < delta}`` under ``law``.

    ``law`` is a :class:`ConditionalLaw`, a sample array, or a
    :class:`BinnedLaw` (bins represented by their centers).
    """
    if not delta > 0:
        raise ConfigError("delta", "must be positive")
    if isinstance(law, BinnedLaw):
        if law.discrete:
            raise ConfigError("law", "annulus mass needs a continuous binned law")
        d = J.distance(law.centers())
        return float(np.sum(law.probs.reshape(-1)[(d > 0) & (d < delta)]))
    rows = _as_rows(law)
    if rows.shape[0] == 0:
        raise DataError("annulus mass of an empty law")
    d = J.distance(rows)
    return float(np.mean((d > 0) & (d < delta)))


@dataclass
class CoverResult:
    boxes: BoxSet
    sym_diff: float
    depth: int
    converged: bool
    history: list


def box_cover(
    membership: Callable,
    lo,
    hi,
    epsilon: float,
    seed=0,
    votes: int = 64,
    max_depth: int = 12,
    reference_n: int = 100_000,
) -> CoverResult:
    """Finite box union ``J`` with estimated ``lambda(S symdiff J) < epsilon``.

    Dyadic refinement of the bounding box: each cell gets ``votes`` uniform
    membership queries; unanimous cells are settled (kept or dropped), mixed
    cells are kept on a majority and split further while the symmetric
    difference, estimated from ``reference_n`` uniform reference points, is
    still at least ``epsilon``. Stops at ``max_depth`` with ``converged``
    false if the target was not met.
    """
    if not epsilon > 0:
        raise ConfigError("epsilon", "must be positive")
    seed = as_seed(seed)
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    d = lo.size
    vol = float(np.prod(hi - lo))
    rng_ref = seed.split(0).generator()
    ref = lo + rng_ref.random((reference_n, d)) * (hi - lo)
    ref_in = np.asarray(membership(ref), dtype=bool)

    kept_lo, kept_hi = [], []
    cells_lo = lo[None, :].copy()
    cells_hi = hi[None, :].copy()
    ref_cell = np.zeros(reference_n, dtype=np.int64)  # index into current cells, -1 once settled
    ref_in_J = np.zeros(reference_n, dtype=bool)
    history = []
    sym = float("nan")
    depth = 0
    while True:
        rng = seed.split(1).split(depth).generator()
        c = cells_lo.shape[0]
        pts = cells_lo[:, None, :] + rng.random((c, votes, d)) * (cells_hi - cells_lo)[:, None, :]
        frac = np.asarray(membership(pts.reshape(-1, d)), dtype=bool).reshape(c, votes).mean(axis=1)
        inside = frac == 1.0
        mixed = (frac > 0.0) & (frac < 1.0)
        majority = mixed & (frac >= 0.5)

        kept_lo.append(cells_lo[inside])
        kept_hi.append(cells_hi[inside])
        active = ref_cell >= 0
        cell_of = ref_cell[active]
        ref_in_J[active] = inside[cell_of] | majority[cell_of]
        sym = vol * float(np.mean(ref_in != ref_in_J))
        history.append((depth, sym, int(mixed.sum())))
        done = sym < epsilon or depth >= max_depth or not mixed.any()
        if done:
            final_lo = np.concatenate(kept_lo + [cells_lo[majority]])
            final_hi = np.concatenate(kept_hi + [cells_hi[majority]])
            return CoverResult(BoxSet(final_lo, final_hi), sym, depth, sym < epsilon, history)

        # split mixed cells into 2^d dyadic children
        parents = np.flatnonzero(mixed)
        remap = np.full(c, -1, dtype=np.int64)
        remap[parents] = np.arange(parents.size)
        mid = 0.5 * (cells_lo[parents] + cells_hi[parents])
        corners = np.array(list(itertools.product((0, 1), repeat=d)), dtype=bool)
        child_lo = np.where(corners[None], mid[:, None, :], cells_lo[parents][:, None, :])
        child_hi = np.where(corners[None], cells_hi[parents][:, None, :], mid[:, None, :])
        cells_lo = child_lo.reshape(-1, d)
        cells_hi = child_hi.reshape(-1, d)

        new_cell = np.full(reference_n, -1, dtype=np.int64)
        idx = np.flatnonzero(active)
        p = remap[cell_of]
        live = p >= 0
        idx, p = idx[live], p[live]
        upper = ref[idx] >= mid[p]
        code = np.zeros(idx.size, dtype=np.int64)
        for j in range(d):
            code = code * 2 + upper[:, j]
        new_cell[idx] = p * (1 << d) + code
        ref_cell = new_cell
        depth += 1
