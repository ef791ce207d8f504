"""Built-in bounded transforms ``f`` and the pathological test battery.

All transforms act on a single latent coordinate (``coord``, default 0),
which is the whole latent value for one-dimensional spaces.
"""

from __future__ import annotations

import numpy as np

from regulab.dgp import DerivedTask
from regulab.errors import ConfigError
from regulab.sampling import as_seed


def _coord(theta, coord):
    theta = np.asarray(theta)
    if theta.ndim == 1:
        return theta.astype(float)
    return theta[:, coord].astype(float)


def frac_values(v):
    """Fractional part ``v - floor(v)``; lies in [0, 1) for negative ``v`` too."""
    v = np.asarray(v, dtype=float)
    return v - np.floor(v)


def frac(coord: int = 0) -> DerivedTask:
    return DerivedTask(lambda th: frac_values(_coord(th, coord)), 1.0, "frac")


def indicator(lo: float = 0.5, hi: float = np.inf, coord: int = 0) -> DerivedTask:
    """``1[lo <= theta < hi]``."""
    if not lo < hi:
        raise ConfigError("task.lo", "indicator needs lo < hi")

    def f(th):
        v = _coord(th, coord)
        return ((v >= lo) & (v < hi)).astype(float)

    return DerivedTask(f, 1.0, f"indicator[{lo:g},{hi:g})")


def sign(offset: float = 0.0, coord: int = 0) -> DerivedTask:
    return DerivedTask(lambda th: np.sign(_coord(th, coord) - offset), 1.0, f"sign@{offset:g}")


def sign_of_frac(coord: int = 0) -> DerivedTask:
    """``sign(frac(theta) - 1/2)``, a sign composition with jumps at every half-integer."""
    return DerivedTask(
        lambda th: np.sign(frac_values(_coord(th, coord)) - 0.5), 1.0, "sign(frac-0.5)"
    )


def constant(value: float = 1.0) -> DerivedTask:
    bound = max(abs(float(value)), 1e-300)
    return DerivedTask(lambda th: np.full(np.asarray(th).shape[0], float(value)), bound, "constant")


def step(breakpoints, values, coord: int = 0, name: str = "step") -> DerivedTask:
    """Right-continuous step function: ``values[i]`` on ``[breakpoints[i-1], breakpoints[i])``."""
    bps = np.asarray(breakpoints, dtype=float)
    vals = np.asarray(values, dtype=float)
    if vals.size != bps.size + 1:
        raise ConfigError("task.values", "need len(breakpoints) + 1 values")
    if np.any(np.diff(bps) <= 0):
        raise ConfigError("task.breakpoints", "must be strictly increasing")
    bound = float(np.max(np.abs(vals))) or 1e-300

    def f(th):
        return vals[np.searchsorted(bps, _coord(th, coord), side="right")]

    return DerivedTask(f, bound, name)


def random_step(seed, n_steps: int = 10, lo: float = -2.0, hi: float = 3.0, coord: int = 0):
    """Step function with ``n_steps`` pieces: random breakpoints in [lo, hi], values in [0, 1]."""
    rng = as_seed(seed).generator()
    bps = np.sort(rng.uniform(lo, hi, n_steps - 1))
    vals = rng.uniform(0.0, 1.0, n_steps)
    return step(bps, vals, coord, name=f"random_step{n_steps}")


def battery(seed, lo: float = -2.0, hi: float = 3.0, coord: int = 0):
    """At least five bounded, discontinuous transforms for spot-checking continuity.

    ``[lo, hi]`` should roughly cover the latent range so the step
    functions have breakpoints where the mass is.
    """
    seed = as_seed(seed)
    mid = 0.5 * (lo + hi)
    return [
        frac(coord),
        indicator(mid, np.inf, coord),
        indicator(lo + 0.25 * (hi - lo), lo + 0.6 * (hi - lo), coord),
        sign(mid, coord),
        sign_of_frac(coord),
        random_step(seed.split(0), 10, lo, hi, coord),
        random_step(seed.split(1), 10, lo, hi, coord),
    ]


BUILTIN = ("frac", "indicator", "sign", "sign_frac", "constant", "step", "random_step")


def from_config(cfg: dict, seed=0) -> DerivedTask:
    """Build a task from a plain dict (``name`` plus its parameters); ``None`` means unset."""
    cfg = {k: v for k, v in dict(cfg).items() if v is not None}
    name = cfg.pop("name", "frac")
    coord = int(cfg.pop("coord", 0))
    if name == "frac":
        task = frac(coord)
    elif name == "indicator":
        task = indicator(float(cfg.pop("lo", 0.5)), float(cfg.pop("hi", np.inf)), coord)
    elif name == "sign":
        task = sign(float(cfg.pop("offset", 0.0)), coord)
    elif name == "sign_frac":
        task = sign_of_frac(coord)
    elif name == "constant":
        task = constant(float(cfg.pop("value", 1.0)))
    elif name == "step":
        task = step(cfg.pop("breakpoints", []), cfg.pop("values", [0.0]), coord)
    elif name == "random_step":
        task = random_step(
            seed,
            int(cfg.pop("steps", 10)),
            float(cfg.pop("lo", -2.0)),
            float(cfg.pop("hi", 3.0)),
            coord,
        )
    else:
        raise ConfigError("task.name", f"unknown task {name!r}; choose from {BUILTIN}")
    for key in cfg:
        raise ConfigError(f"task.{key}", f"not a parameter of task {name!r}")
    return task
