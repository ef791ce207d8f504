"""Seeded, splittable randomness and primitive distribution sampling.

Every Monte-Carlo estimate in the toolkit draws from a :class:`SeedSpec`.
A spec is a root seed plus a hierarchical stream path; the pair keys a
Philox counter-based generator through :class:`numpy.random.SeedSequence`,
so sibling paths give independent streams and re-keying is free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import ndtri

from regulab.errors import ConfigError

_U64 = 2**64

# Reserved child index for resampling degenerate rows; callers split from
# small indices so this never collides with a grid or probe substream.
RESAMPLE_STREAM = 2**31


@dataclass(frozen=True)
class SeedSpec:
    root_seed: int
    stream_path: tuple = ()

    def __post_init__(self):
        if not (0 <= int(self.root_seed) < _U64):
            raise ConfigError("seed.root_seed", "must be a 64-bit unsigned integer")
        path = tuple(int(c) for c in self.stream_path)
        if any(c < 0 for c in path):
            raise ConfigError("seed.stream_path", "entries must be non-negative")
        object.__setattr__(self, "root_seed", int(self.root_seed))
        object.__setattr__(self, "stream_path", path)

    def split(self, child: int) -> "SeedSpec":
        return split(self, child)

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.root_seed, spawn_key=self.stream_path)
        return np.random.Generator(np.random.Philox(ss))

    def as_dict(self) -> dict:
        return {"root_seed": self.root_seed, "stream_path": list(self.stream_path)}


def split(seed: SeedSpec, child: int) -> SeedSpec:
    """Child stream of ``seed``; injective in ``child``."""
    if int(child) < 0:
        raise ConfigError("child", "must be non-negative")
    return SeedSpec(seed.root_seed, seed.stream_path + (int(child),))


def as_seed(seed) -> SeedSpec:
    if isinstance(seed, SeedSpec):
        return seed
    return SeedSpec(int(seed))


@dataclass(frozen=True)
class DistributionSpec:
    """A noise or input law.

    ``kind`` is one of ``uniform``, ``gaussian``, ``categorical`` or
    ``custom_quantile``. Use the constructors :func:`uniform`,
    :func:`gaussian`, :func:`categorical` and :func:`custom_quantile`
    rather than building instances by hand.
    """

    kind: str
    dimension: int = 1
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None
    mean: Optional[np.ndarray] = None
    std: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    quantile_fn: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        self.validate()

    @property
    def is_continuous(self) -> bool:
        return self.kind in ("uniform", "gaussian", "custom_quantile")

    def validate(self):
        if self.kind not in ("uniform", "gaussian", "categorical", "custom_quantile"):
            raise ConfigError("kind", f"unknown distribution kind {self.kind!r}")
        if not isinstance(self.dimension, (int, np.integer)) or self.dimension < 1:
            raise ConfigError("dimension", "must be a positive integer")
        if self.kind == "uniform":
            if self.lo is None or self.hi is None:
                raise ConfigError("lo", "uniform requires lo and hi")
            if not np.all(np.isfinite(self.lo)) or not np.all(np.isfinite(self.hi)):
                raise ConfigError("lo", "uniform bounds must be finite")
            if not np.all(self.lo < self.hi):
                raise ConfigError("lo", "uniform requires lo < hi")
        elif self.kind == "gaussian":
            if self.mean is None or self.std is None:
                raise ConfigError("std", "gaussian requires mean and std")
            if not np.all(self.std > 0):
                raise ConfigError("std", "gaussian requires std > 0")
        elif self.kind == "categorical":
            w = self.weights
            if w is None or w.ndim != 1 or w.size == 0:
                raise ConfigError("weights", "categorical requires a non-empty weight vector")
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ConfigError("weights", "weights must be finite and non-negative")
            if abs(float(w.sum()) - 1.0) > 1e-12:
                raise ConfigError("weights", f"weights sum to {float(w.sum())!r}, not 1")
            if self.dimension != 1:
                raise ConfigError("dimension", "categorical draws are one-dimensional")
        elif self.quantile_fn is None or not callable(self.quantile_fn):
            raise ConfigError("quantile_fn", "custom_quantile requires a callable")

    def quantile(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms of shape (n, dimension) through the law's quantile function."""
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform":
            return self.lo + u * (self.hi - self.lo)
        if self.kind == "gaussian":
            return self.mean + self.std * ndtri(u)
        if self.kind == "custom_quantile":
            return np.asarray(self.quantile_fn(u), dtype=float).reshape(u.shape)
        cum = np.cumsum(self.weights)
        return np.minimum(np.searchsorted(cum, u, side="right"), len(cum) - 1)

    def describe(self) -> dict:
        out = {"kind": self.kind, "dimension": int(self.dimension)}
        for name in ("lo", "hi", "mean", "std", "weights"):
            value = getattr(self, name)
            if value is not None:
                out[name] = np.asarray(value).tolist()
        return out


def _vec(value, dimension, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(dimension, float(arr))
    if arr.shape != (dimension,):
        raise ConfigError(name, f"expected scalar or length-{dimension} vector")
    return arr


def uniform(lo=0.0, hi=1.0, dimension: int = 1) -> DistributionSpec:
    return DistributionSpec(
        "uniform", dimension, lo=_vec(lo, dimension, "lo"), hi=_vec(hi, dimension, "hi")
    )


def gaussian(mean=0.0, std=1.0, dimension: int = 1) -> DistributionSpec:
    return DistributionSpec(
        "gaussian",
        dimension,
        mean=_vec(mean, dimension, "mean"),
        std=_vec(std, dimension, "std"),
    )


def categorical(weights: Sequence[float]) -> DistributionSpec:
    return DistributionSpec("categorical", 1, weights=np.asarray(weights, dtype=float))


def custom_quantile(fn: Callable, dimension: int = 1) -> DistributionSpec:
    return DistributionSpec("custom_quantile", dimension, quantile_fn=fn)


def draw(spec: DistributionSpec, seed: SeedSpec, n: int) -> np.ndarray:
    """Draw an ``(n, spec.dimension)`` matrix of i.i.d. rows.

    The result is a pure function of ``(spec, seed, n)``.
    """
    if int(n) < 1:
        raise ConfigError("n", "must be at least 1")
    n = int(n)
    rng = as_seed(seed).generator()
    d = spec.dimension
    if spec.kind == "uniform":
        return spec.lo + rng.random((n, d)) * (spec.hi - spec.lo)
    if spec.kind == "gaussian":
        return spec.mean + spec.std * rng.standard_normal((n, d))
    if spec.kind == "categorical":
        return rng.choice(len(spec.weights), size=(n, 1), p=spec.weights)
    return spec.quantile(rng.random((n, d)))


def standard_error(values: np.ndarray) -> float:
    n = len(values)
    if n < 2:
        return 0.0
    return float(np.std(values, ddof=1) / math.sqrt(n))
