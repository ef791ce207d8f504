"""Factored data-generating processes and their conditional laws.

A :class:`Factorization` bundles an input domain ``K``, a noise law for
``R`` (independent of ``X`` by construction) and a deterministic map
``t_map(x_rows, r_rows) -> theta_rows``. Because the noise law does not
depend on ``x``, the law of ``L`` given ``X = x`` is the pushforward of the
noise law through ``r -> t_map(x, r)``; :func:`conditional_law` samples it
directly and :func:`joint_sample` produces the raw ``(X, L)`` data a learner
would see, for cross-checking the two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from regulab.errors import (
    BoundViolationError,
    ConfigError,
    DegenerateDrawError,
    LatentEvaluationError,
)
from regulab.parallel import ordered_map
from regulab.sampling import RESAMPLE_STREAM, DistributionSpec, SeedSpec, as_seed, draw

MAX_RESAMPLE_ROUNDS = 32
EVAL_CHUNK = 1 << 16


@dataclass(frozen=True)
class LatentSpace:
    """The space Theta that ``t_map`` lands in.

    ``exact_equality`` marks a continuous space whose points are compared by
    identity for regularity purposes (e.g. a matched partner's features).
    """

    kind: str
    dimension: int = 1
    labels: Optional[tuple] = None
    exact_equality: bool = False

    def __post_init__(self):
        if self.kind not in ("continuous", "discrete"):
            raise ConfigError("latent.kind", f"unknown latent kind {self.kind!r}")
        if self.kind == "continuous" and self.dimension < 1:
            raise ConfigError("latent.dimension", "continuous latent needs d >= 1")

    @classmethod
    def continuous(cls, dimension: int = 1, exact_equality: bool = False):
        return cls("continuous", int(dimension), None, exact_equality)

    @classmethod
    def discrete(cls, labels: Optional[Sequence] = None):
        return cls("discrete", 1, None if labels is None else tuple(labels))

    @property
    def compares_exactly(self) -> bool:
        return self.kind == "discrete" or self.exact_equality

    def normalize(self, values) -> np.ndarray:
        arr = np.asarray(values)
        if self.kind == "discrete":
            return arr.reshape(-1)
        arr = arr.astype(float, copy=False)
        return arr.reshape(arr.shape[0], self.dimension)

    def contains(self, values) -> bool:
        if self.kind == "discrete":
            return self.labels is None or bool(np.all(np.isin(values, self.labels)))
        return values.ndim == 2 and values.shape[1] == self.dimension


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or not np.all(lo < hi):
            raise ConfigError("input_domain", "box needs lo < hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dimension(self) -> int:
        return self.lo.size

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.all((pts >= self.lo - tol) & (pts <= self.hi + tol), axis=1)


@dataclass(frozen=True)
class FiniteSet:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] == 0:
            raise ConfigError("input_domain", "finite domain must be non-empty")
        object.__setattr__(self, "points", pts)

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        pts = np.atleast_2d(points)
        d = np.abs(pts[:, None, :] - self.points[None, :, :]).max(axis=2)
        return d.min(axis=1) <= tol


@dataclass(frozen=True)
class Factorization:
    input_domain: object
    noise: DistributionSpec
    t_map: Callable = field(compare=False)
    latent: LatentSpace
    name: str = ""

    @property
    def input_dim(self) -> int:
        return self.input_domain.dimension

    @property
    def noise_dim(self) -> int:
        return self.noise.dimension

    def point(self, x) -> np.ndarray:
        p = np.atleast_1d(np.asarray(x, dtype=float))
        if p.shape != (self.input_dim,):
            raise ConfigError("x", f"expected a point of dimension {self.input_dim}")
        return p

    def evaluate(self, x_rows: np.ndarray, r: np.ndarray) -> np.ndarray:
        """Apply ``t_map`` row-wise; failures carry the offending ``(x, r)``."""
        m = r.shape[0]
        if m <= EVAL_CHUNK:
            return self._evaluate_chunk(x_rows, r)
        parts = [
            self._evaluate_chunk(x_rows[s : s + EVAL_CHUNK], r[s : s + EVAL_CHUNK], offset=s)
            for s in range(0, m, EVAL_CHUNK)
        ]
        return np.concatenate(parts, axis=0)

    def _evaluate_chunk(self, x_rows, r, offset=0):
        try:
            out = self.t_map(x_rows, r)
        except DegenerateDrawError as exc:
            raise DegenerateDrawError(np.asarray(exc.rows) + offset) from None
        except Exception as exc:
            i = self._first_failing_row(x_rows, r)
            raise LatentEvaluationError(x_rows[i].tolist(), r[i].tolist(), exc) from exc
        out = self.latent.normalize(out)
        if out.shape[0] != r.shape[0]:
            raise LatentEvaluationError(x_rows[0].tolist(), r[0].tolist(), "wrong output length")
        if self.latent.kind == "continuous":
            bad = ~np.all(np.isfinite(out), axis=1)
            if bad.any():
                i = int(np.argmax(bad))
                raise LatentEvaluationError(x_rows[i].tolist(), r[i].tolist(), "non-finite output")
        return out

    def _first_failing_row(self, x_rows, r):
        for i in range(r.shape[0]):
            try:
                self.t_map(x_rows[i : i + 1], r[i : i + 1])
            except Exception:
                return i
        return 0


def evaluate_common(fact: Factorization, points, n: int, seed: SeedSpec):
    """Evaluate ``t_map`` at several fixed inputs on one shared noise draw.

    Rows that raise :class:`DegenerateDrawError` at any input are redrawn
    from a dedicated resampling substream, for every input at once, so the
    coupling across inputs is preserved.

    Returns:
        ``(r, thetas, resampled)`` where ``thetas[j]`` belongs to ``points[j]``.
    """
    seed = as_seed(seed)
    points = [fact.point(p) for p in points]
    r = draw(fact.noise, seed, n)
    resampled = 0
    for attempt in range(MAX_RESAMPLE_ROUNDS + 1):
        bad = set()
        thetas = []
        for p in points:
            try:
                thetas.append(fact.evaluate(np.broadcast_to(p, (n, p.size)), r))
            except DegenerateDrawError as exc:
                bad.update(int(i) for i in exc.rows)
        if not bad:
            return r, thetas, resampled
        if attempt == MAX_RESAMPLE_ROUNDS:
            break
        rows = np.array(sorted(bad))
        resampled += rows.size
        fresh = draw(fact.noise, seed.split(RESAMPLE_STREAM).split(attempt), rows.size)
        r = r.copy()
        r[rows] = fresh
    raise DegenerateDrawError(sorted(bad), "could not resample degenerate draws")


@dataclass
class ConditionalLaw:
    """Equal-weight sample set standing in for the law of L given X = x."""

    x: np.ndarray
    samples: np.ndarray
    latent: LatentSpace
    resampled: int = 0

    def __post_init__(self):
        if not self.latent.contains(self.samples):
            raise ConfigError("samples", "samples fall outside the declared latent space")

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)


@dataclass(frozen=True)
class DerivedTask:
    """A bounded transform ``f`` of the latent value, vectorized over rows."""

    f: Callable = field(compare=False)
    bound_B: float
    name: str = "f"

    def __post_init__(self):
        if not (self.bound_B > 0 and math.isfinite(self.bound_B)):
            raise ConfigError("task.bound_B", "must be a positive finite real")

    def evaluate(self, theta: np.ndarray) -> np.ndarray:
        vals = np.asarray(self.f(theta), dtype=float).reshape(-1)
        if vals.shape[0] != theta.shape[0]:
            raise ConfigError("task.f", "f must return one value per latent row")
        worst = np.max(np.abs(vals)) if vals.size else 0.0
        if not worst <= self.bound_B:
            raise BoundViolationError(float(worst), self.bound_B)
        return vals


@dataclass(frozen=True)
class CurvePoint:
    x: object
    value: float
    stderr: float
    n: int


def conditional_law(fact: Factorization, x, n: int, seed) -> ConditionalLaw:
    """Sample ``t_map(x, R_i)`` for ``n`` i.i.d. noise draws."""
    p = fact.point(x)
    _, (theta,), resampled = evaluate_common(fact, [p], int(n), seed)
    return ConditionalLaw(p, theta, fact.latent, resampled)


def _mean_and_stderr(vals):
    n = vals.size
    if n and vals.min() == vals.max():
        # exact for constant integrands; summation would add rounding error
        return float(vals[0]), 0.0
    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


def conditional_expectation(
    fact: Factorization, task: DerivedTask, x, n: int, seed, return_stderr: bool = False
):
    """Monte-Carlo estimate of ``E[f(L) | X = x]``."""
    law = conditional_law(fact, x, n, seed)
    mean, se = _mean_and_stderr(task.evaluate(law.samples))
    return (mean, se) if return_stderr else mean


def _grid_point(x):
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    return float(arr[0]) if arr.size == 1 else tuple(float(v) for v in arr)


def curves(fact: Factorization, tasks, x_grid, n: int, seed, threads=None) -> dict:
    """Curves for several tasks sharing one conditional-law draw per grid point.

    Grid point ``i`` always uses substream ``seed.split(i)``, so threading
    never changes the numbers.
    """
    x_grid = list(x_grid)
    if not x_grid:
        raise ConfigError("grid", "x_grid must be non-empty")
    seed = as_seed(seed)
    tasks = list(tasks)

    def one(i, x):
        law = conditional_law(fact, x, n, seed.split(i))
        out = []
        for task in tasks:
            mean, se = _mean_and_stderr(task.evaluate(law.samples))
            out.append(CurvePoint(_grid_point(x), mean, se, int(n)))
        return out

    rows = ordered_map(one, x_grid, threads)
    return {task.name: [row[j] for row in rows] for j, task in enumerate(tasks)}


def curve(fact: Factorization, task: DerivedTask, x_grid, n: int, seed, threads=None):
    """``[(x, E[f(L)|X=x], stderr, n)]`` over ``x_grid``, one substream per point."""
    return curves(fact, [task], x_grid, n, seed, threads)[task.name]


@dataclass
class JointSample:
    xs: np.ndarray
    thetas: np.ndarray
    resampled: int = 0

    def __len__(self):
        return self.xs.shape[0]


def _check_support(fact: Factorization, x_dist: DistributionSpec, xs: np.ndarray):
    if x_dist.dimension != fact.input_dim:
        raise ConfigError("x_dist.dimension", "does not match the input dimension")
    dom = fact.input_domain
    if x_dist.kind == "uniform" and isinstance(dom, Box):
        if np.any(x_dist.lo < dom.lo - 1e-12) or np.any(x_dist.hi > dom.hi + 1e-12):
            raise ConfigError("x_dist", "support extends outside the input domain")
    elif not np.all(dom.contains(xs)):
        raise ConfigError("x_dist", "drawn inputs fall outside the input domain")


def joint_sample(fact: Factorization, x_dist: DistributionSpec, n: int, seed) -> JointSample:
    """``n`` i.i.d. pairs ``(X_i, t_map(X_i, R_i))`` with X and R independent."""
    seed = as_seed(seed)
    n = int(n)
    xs = np.asarray(draw(x_dist, seed.split(0), n), dtype=float)
    _check_support(fact, x_dist, xs)
    r = draw(fact.noise, seed.split(1), n)
    resampled = 0
    for attempt in range(MAX_RESAMPLE_ROUNDS + 1):
        try:
            thetas = fact.evaluate(xs, r)
            return JointSample(xs, thetas, resampled)
        except DegenerateDrawError as exc:
            if attempt == MAX_RESAMPLE_ROUNDS:
                raise
            rows = np.asarray(exc.rows)
            resampled += rows.size
            r = r.copy()
            r[rows] = draw(fact.noise, seed.split(RESAMPLE_STREAM).split(attempt), rows.size)
    raise AssertionError("unreachable")


def window(xs: np.ndarray, x, min_count: int = 1000):
    """Smallest sup-norm half-width ``h`` keeping at least ``min_count`` rows.

    Returns:
        ``(indices, h)`` of the rows with ``max|x_i - x| <= h``.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1:
        xs = xs[:, None]
    if min_count < 1 or min_count > xs.shape[0]:
        raise ConfigError("min_count", "must lie between 1 and the sample size")
    dist = np.max(np.abs(xs - np.atleast_1d(x)[None, :]), axis=1)
    h = float(np.partition(dist, min_count - 1)[min_count - 1])
    return np.flatnonzero(dist <= h), h


def kernel_regression(xs, ys, x, bandwidth: Optional[float] = None) -> float:
    """Nadaraya-Watson estimate at ``x`` with a Gaussian product kernel."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1:
        xs = xs[:, None]
    ys = np.asarray(ys, dtype=float)
    if bandwidth is None:
        # Scott's rule
        bandwidth = float(np.mean(np.std(xs, axis=0))) * xs.shape[0] ** (-1.0 / (xs.shape[1] + 4))
    u = (xs - np.atleast_1d(x)[None, :]) / bandwidth
    w = np.exp(-0.5 * np.sum(u * u, axis=1))
    total = w.sum()
    if total <= 0:
        raise ConfigError("bandwidth", "no sample mass near x")
    return float(np.dot(w, ys) / total)


def nearest_neighbor_regression(xs, ys, x, k: int = 1000) -> float:
    """Mean of ``ys`` over the ``k`` nearest inputs (Euclidean)."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1:
        xs = xs[:, None]
    d = np.linalg.norm(xs - np.atleast_1d(x)[None, :], axis=1)
    idx = np.argpartition(d, k - 1)[:k]
    return float(np.mean(np.asarray(ys)[idx]))
