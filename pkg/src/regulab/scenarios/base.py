from dataclasses import dataclass, field

import numpy as np

from regulab.dgp import Factorization
from regulab.sampling import DistributionSpec


@dataclass(frozen=True)
class Scenario:
    """A factorization plus the defaults needed to probe and plot it.

    ``path_axis`` is the input coordinate swept by ``grid``; ``latent_range``
    is where the latent mass sits, used to place step-function breakpoints.
    """

    name: str
    factorization: Factorization
    x_dist: DistributionSpec
    x0: tuple
    grid: list = field(compare=False)
    path_axis: int = 0
    latent_range: tuple = (-2.0, 3.0)

    def path_coords(self, grid=None):
        pts = self.grid if grid is None else grid
        return [float(np.atleast_1d(p)[self.path_axis]) for p in pts]


def line_grid(lo, hi, points, base=None, axis=0):
    """Grid of ``points`` inputs sweeping coordinate ``axis`` from ``lo`` to ``hi``."""
    ts = np.linspace(lo, hi, int(points))
    if base is None:
        return [float(t) for t in ts]
    out = []
    for t in ts:
        p = np.array(base, dtype=float)
        p[axis] = t
        out.append(tuple(p.tolist()))
    return out
