"""Turning x-dependent continuous noise into i.i.d. uniforms.

Given joint samples of ``(X, R)`` with ``R`` in R^k, component ``i`` of the
whitening map is the conditional CDF of ``R_i`` given ``X`` and
``R_1..R_{i-1}``. Each conditional CDF is estimated by a recursive
equal-count partition of the conditioning coordinates (``x_bins`` per input
coordinate, then ``r_bins`` per noise prefix coordinate), a piecewise-linear
empirical CDF in every leaf, and linear interpolation between neighbouring
cells along each conditioning coordinate. The interpolated CDF is monotone
in ``r_i`` by construction and continuous in the conditioning values.

The inverse map reconstructs ``r`` one component at a time, each as
``sup{z : F(z) <= c}`` found by bisection on the interpolated CDF.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import stats

from regulab import kernels
from regulab.dgp import Box, Factorization, LatentSpace
from regulab.errors import ConfigError, DataError, FitError
from regulab.metrics import ks_uniform
from regulab.sampling import SeedSpec, as_seed, uniform

CHAIN_FORMAT = "regulab-cdf-chain"
CHAIN_VERSION = 1
BISECTION_STEPS = 64


@dataclass(frozen=True)
class BinningConfig:
    x_bins: int = 32
    r_bins: int = 16
    min_leaf: int = 8

    def __post_init__(self):
        for name in ("x_bins", "r_bins"):
            if getattr(self, name) < 1:
                raise ConfigError(f"bins.{name}", "must be at least 1")
        if self.min_leaf < 2:
            raise ConfigError("bins.min_leaf", "must be at least 2")


@dataclass
class _Component:
    """One conditional CDF: partition tree plus per-leaf sorted samples."""

    coords: tuple
    centers: list
    knots: np.ndarray
    offsets: np.ndarray

    @property
    def n_leaves(self) -> int:
        return self.offsets.size - 1

    def entries(self, z: np.ndarray):
        """Leaf mixture for each query row: ``(query, leaf, weight)`` triples."""
        m = z.shape[0]
        q = np.arange(m)
        node = np.zeros(m, dtype=np.int64)
        w = np.ones(m)
        for coord, centers in zip(self.coords, self.centers):
            b = centers.shape[1]
            c = centers[node]
            v = z[q, coord]
            cnt = np.sum(c < v[:, None], axis=1)
            lo = np.clip(cnt - 1, 0, b - 1)
            hi = np.clip(cnt, 0, b - 1)
            row = np.arange(q.size)
            clo = c[row, lo]
            chi = c[row, hi]
            gap = chi - clo
            t = np.where(gap > 0, (v - clo) / np.where(gap > 0, gap, 1.0), 0.0)
            t = np.clip(t, 0.0, 1.0)
            two = t > 0
            q = np.concatenate([q, q[two]])
            node_next = np.concatenate([node * b + lo, node[two] * b + hi[two]])
            w = np.concatenate([w * (1.0 - t), w[two] * t[two]])
            keep = w > 0
            q, node, w = q[keep], node_next[keep], w[keep]
        return q, node, w

    def mixture_cdf(self, entries, t: np.ndarray, m: int) -> np.ndarray:
        q, leaf, w = entries
        vals = kernels.leaf_cdf(leaf, np.ascontiguousarray(t[q]), self.knots, self.offsets)
        return np.minimum(np.bincount(q, weights=w * vals, minlength=m), 1.0)

    def bracket(self, entries, m: int):
        q, leaf, _ = entries
        lo = np.full(m, np.inf)
        hi = np.full(m, -np.inf)
        np.minimum.at(lo, q, self.knots[self.offsets[leaf]])
        np.maximum.at(hi, q, self.knots[self.offsets[leaf + 1] - 1])
        return lo, hi


def _fit_component(z: np.ndarray, target: np.ndarray, branching, min_leaf: int, label: str):
    nodes = [np.arange(target.size)]
    centers = []
    for coord, b in enumerate(branching):
        level_centers = np.empty((len(nodes), b))
        children = []
        for ni, idx in enumerate(nodes):
            if idx.size < b * min_leaf:
                raise FitError(
                    f"{label}: conditioning bin {ni} at level {coord} holds {idx.size} "
                    f"points, fewer than {b} x {min_leaf} needed to split"
                )
            order = idx[np.argsort(z[idx, coord], kind="stable")]
            for bi, chunk in enumerate(np.array_split(order, b)):
                level_centers[ni, bi] = np.median(z[chunk, coord])
                children.append(chunk)
        centers.append(level_centers)
        nodes = children
    knots = []
    offsets = [0]
    for idx in nodes:
        if idx.size < min_leaf:
            raise FitError(f"{label}: leaf bin holds {idx.size} points (< {min_leaf})")
        knots.append(np.sort(target[idx]))
        offsets.append(offsets[-1] + idx.size)
    return _Component(
        tuple(range(len(branching))),
        centers,
        np.ascontiguousarray(np.concatenate(knots)),
        np.asarray(offsets, dtype=np.int64),
    )


def _as_2d(a, name):
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DataError(f"{name} must be a vector or a 2-D array")
    return arr


class ConditionalCdfChain:
    """Fitted chain of conditional CDFs; immutable after construction."""

    def __init__(self, components, input_dim, k, x_lo, x_hi, binning, identity=False):
        self.components = list(components)
        self.input_dim = int(input_dim)
        self.k = int(k)
        self.x_lo = np.asarray(x_lo, dtype=float)
        self.x_hi = np.asarray(x_hi, dtype=float)
        self.binning = binning
        self.identity = bool(identity)

    @classmethod
    def identity_chain(cls, k: int = 1, input_dim: int = 1):
        """Chain that maps ``r`` to ``clip(r, 0, 1)``: exact only for white U[0,1] noise."""
        return cls([], input_dim, k, np.full(input_dim, -np.inf), np.full(input_dim, np.inf),
                   BinningConfig(), identity=True)

    # -- evaluation ---------------------------------------------------------

    def _check(self, x, v, name):
        x = _as_2d(x, "x")
        v = _as_2d(v, name)
        if x.shape[0] == 1 and v.shape[0] > 1:
            x = np.broadcast_to(x, (v.shape[0], x.shape[1]))
        if x.shape[1] != self.input_dim or v.shape[1] != self.k or x.shape[0] != v.shape[0]:
            raise DataError(
                f"expected x of width {self.input_dim} and {name} of width {self.k} with equal rows"
            )
        return x, v

    def cdf(self, i: int, x, prefix, t) -> np.ndarray:
        """``F_hat`` of component ``i`` at ``t`` given ``x`` and ``r_1..r_{i-1}``."""
        x = _as_2d(x, "x")
        t = np.asarray(t, dtype=float).reshape(-1)
        if self.identity:
            return np.clip(t, 0.0, 1.0)
        z = np.hstack([x, _as_2d(prefix, "prefix")[:, :i]]) if i else x
        z = np.broadcast_to(z, (t.size, z.shape[1])) if z.shape[0] == 1 else z
        comp = self.components[i]
        return comp.mixture_cdf(comp.entries(z), t, t.size)

    def quantile(self, i: int, x, prefix, c) -> np.ndarray:
        """Pseudo-inverse ``sup{z : F_hat(z) <= c}``, kept within the fitted support."""
        x = _as_2d(x, "x")
        c = np.asarray(c, dtype=float).reshape(-1)
        if self.identity:
            return np.clip(c, 0.0, 1.0)
        z = np.hstack([x, _as_2d(prefix, "prefix")[:, :i]]) if i else x
        z = np.broadcast_to(z, (c.size, z.shape[1])) if z.shape[0] == 1 else z
        comp = self.components[i]
        ent = comp.entries(z)
        a, b = comp.bracket(ent, c.size)
        for _ in range(BISECTION_STEPS):
            mid = 0.5 * (a + b)
            ok = comp.mixture_cdf(ent, mid, c.size) <= c
            a = np.where(ok, mid, a)
            b = np.where(ok, b, mid)
            if np.all(b - a <= 4 * np.finfo(float).eps * np.maximum(np.abs(a), 1.0)):
                break
        return a

    def whiten(self, x, r, with_flags: bool = False):
        """``c_i = F_hat_{x, r_1..r_{i-1}}(r_i)``; optionally flag clamped rows."""
        x, r = self._check(x, r, "r")
        m = r.shape[0]
        c = np.empty_like(r)
        flags = np.zeros(m, dtype=bool)
        if self.identity:
            c[:] = np.clip(r, 0.0, 1.0)
            flags = np.any((r < 0) | (r > 1), axis=1)
            return (c, flags) if with_flags else c
        flags |= np.any((x < self.x_lo) | (x > self.x_hi), axis=1)
        for i, comp in enumerate(self.components):
            z = np.hstack([x, r[:, :i]])
            ent = comp.entries(z)
            c[:, i] = comp.mixture_cdf(ent, r[:, i], m)
            lo, hi = comp.bracket(ent, m)
            flags |= (r[:, i] < lo) | (r[:, i] > hi)
        return (c, flags) if with_flags else c

    def unwhiten(self, x, c) -> np.ndarray:
        """Inductive inverse: ``r_1`` from ``c_1``, then each ``r_i`` given the rebuilt prefix."""
        x, c = self._check(x, c, "c")
        r = np.empty_like(c)
        for i in range(self.k):
            r[:, i] = self.quantile(i, x, r, c[:, i])
        return r

    # -- persistence --------------------------------------------------------

    def save(self, path) -> Path:
        path = Path(path)
        meta = {
            "format": CHAIN_FORMAT,
            "version": CHAIN_VERSION,
            "k": self.k,
            "input_dim": self.input_dim,
            "identity": self.identity,
            "binning": {
                "x_bins": self.binning.x_bins,
                "r_bins": self.binning.r_bins,
                "min_leaf": self.binning.min_leaf,
            },
            "levels": [len(comp.centers) for comp in self.components],
        }
        arrays = {"meta": np.array(json.dumps(meta, sort_keys=True)),
                  "x_lo": self.x_lo, "x_hi": self.x_hi}
        for i, comp in enumerate(self.components):
            arrays[f"c{i}_knots"] = comp.knots
            arrays[f"c{i}_offsets"] = comp.offsets
            for lvl, cen in enumerate(comp.centers):
                arrays[f"c{i}_centers{lvl}"] = cen
        # npz layout, but with fixed zip timestamps so equal chains give equal bytes
        with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
            for name in sorted(arrays):
                info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
                buf = io.BytesIO()
                np.lib.format.write_array(buf, np.asarray(arrays[name]), allow_pickle=False)
                zf.writestr(info, buf.getvalue())
        return path

    @classmethod
    def load(cls, path):
        with np.load(Path(path), allow_pickle=False) as data:
            try:
                meta = json.loads(str(data["meta"]))
            except KeyError:
                raise DataError(f"{path}: not a CDF chain file") from None
            if meta.get("format") != CHAIN_FORMAT:
                raise DataError(f"{path}: unknown format {meta.get('format')!r}")
            if meta.get("version") != CHAIN_VERSION:
                raise DataError(f"{path}: unsupported chain version {meta.get('version')!r}")
            comps = []
            for i, levels in enumerate(meta["levels"]):
                comps.append(_Component(
                    tuple(range(levels)),
                    [np.array(data[f"c{i}_centers{lvl}"]) for lvl in range(levels)],
                    np.array(data[f"c{i}_knots"]),
                    np.array(data[f"c{i}_offsets"]),
                ))
            return cls(comps, meta["input_dim"], meta["k"], np.array(data["x_lo"]),
                       np.array(data["x_hi"]), BinningConfig(**meta["binning"]),
                       identity=meta["identity"])


def fit_chain(x, r, k: Optional[int] = None, bins: BinningConfig = BinningConfig()) -> ConditionalCdfChain:
    """Fit the chained conditional CDFs from joint samples of ``(X, R)``."""
    x = _as_2d(x, "x")
    r = _as_2d(r, "r")
    if k is not None and r.shape[1] != k:
        raise DataError(f"r has {r.shape[1]} columns, expected k={k}")
    if x.shape[0] != r.shape[0]:
        raise DataError("x and r must have the same number of rows")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(r))):
        raise DataError("joint samples contain non-finite values")
    if x.shape[0] < 1000:
        raise DataError(f"need at least 1000 joint pairs to fit, got {x.shape[0]}")
    n_in = x.shape[1]
    comps = []
    for i in range(r.shape[1]):
        z = np.hstack([x, r[:, :i]])
        branching = [bins.x_bins] * n_in + [bins.r_bins] * i
        comps.append(_fit_component(z, r[:, i], branching, bins.min_leaf, f"component {i}"))
    return ConditionalCdfChain(comps, n_in, r.shape[1], x.min(axis=0), x.max(axis=0), bins)


def whiten(chain: ConditionalCdfChain, x, r, with_flags: bool = False):
    return chain.whiten(x, r, with_flags)


def unwhiten(chain: ConditionalCdfChain, x, c):
    return chain.unwhiten(x, c)


@dataclass
class WhitenessReport:
    ks: list
    corr_with_x: list
    corr_between: list
    max_abs_corr: float
    clamped_fraction: float
    ks_threshold: float
    corr_threshold: float
    n: int

    @property
    def passed(self) -> bool:
        return max(self.ks) < self.ks_threshold and self.max_abs_corr < self.corr_threshold

    def to_dict(self) -> dict:
        return {
            "ks": self.ks,
            "corr_with_x": self.corr_with_x,
            "corr_between": self.corr_between,
            "max_abs_corr": self.max_abs_corr,
            "clamped_fraction": self.clamped_fraction,
            "thresholds": {"ks": self.ks_threshold, "corr": self.corr_threshold},
            "n": self.n,
            "passed": self.passed,
        }


def verify_whiteness(chain: ConditionalCdfChain, x, r, ks_threshold: float = 0.02,
                     corr_threshold: float = 0.05) -> WhitenessReport:
    """KS of each whitened component vs U[0,1] and rank correlations.

    Rank correlations are taken between every pair of whitened components
    and between each component and each input coordinate. Pass ``x, r``
    held out from the fit.
    """
    x, r = chain._check(x, r, "r")
    c, flags = chain.whiten(x, r, with_flags=True)
    ks = [ks_uniform(c[:, i]) for i in range(chain.k)]
    ranks = stats.rankdata(np.hstack([c, x]), axis=0)
    rho = np.atleast_2d(np.corrcoef(ranks, rowvar=False))
    k = chain.k
    with_x = np.abs(rho[:k, k:]).tolist()
    between = np.abs(rho[:k, :k] - np.eye(k)).tolist()
    worst = float(np.max(np.abs(rho - np.eye(rho.shape[0]))[:k])) if rho.shape[0] > 1 else 0.0
    return WhitenessReport(ks, with_x, between, worst, float(flags.mean()), ks_threshold,
                           corr_threshold, r.shape[0])


@dataclass(frozen=True)
class DependentFactorization:
    """A factorization whose noise law may depend on ``x``.

    ``noise_given_x(x_rows, rng)`` draws one noise row per input row.
    """

    input_domain: Box
    x_dist: object
    noise_given_x: Callable = field(compare=False)
    t_map: Callable = field(compare=False)
    latent: LatentSpace
    k: int
    name: str = ""

    def joint(self, n: int, seed):
        from regulab.sampling import draw

        seed = as_seed(seed)
        x = np.asarray(draw(self.x_dist, seed.split(0), n), dtype=float)
        r = np.asarray(self.noise_given_x(x, seed.split(1).generator()), dtype=float)
        return x, r.reshape(n, self.k)

    def conditional_noise(self, x, n: int, seed) -> np.ndarray:
        p = np.atleast_1d(np.asarray(x, dtype=float))
        rows = np.broadcast_to(p, (n, p.size)).copy()
        return np.asarray(self.noise_given_x(rows, as_seed(seed).generator()), dtype=float).reshape(n, self.k)

    def conditional_law_samples(self, x, n: int, seed) -> np.ndarray:
        p = np.atleast_1d(np.asarray(x, dtype=float))
        rows = np.broadcast_to(p, (n, p.size))
        return self.latent.normalize(self.t_map(rows, self.conditional_noise(p, n, seed)))


@dataclass(frozen=True)
class WhitenedFactorization:
    """Decomposable rewrite ``t_prime(x, c) = t_map(x, unwhiten(x, c))`` with ``c ~ U[0,1]^k``."""

    base: DependentFactorization
    chain: ConditionalCdfChain

    def t_prime(self, x_rows, c_rows):
        r = self.chain.unwhiten(x_rows, c_rows)
        return self.base.t_map(x_rows, r)

    def factorization(self) -> Factorization:
        return Factorization(
            self.base.input_domain,
            uniform(0.0, 1.0, self.chain.k),
            self.t_prime,
            self.base.latent,
            name=f"whitened:{self.base.name}",
        )
