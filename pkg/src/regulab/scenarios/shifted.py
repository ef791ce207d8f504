"""Processes whose noise depends on the input, for the whitening pipeline.

In each, ``L`` is the noise itself (``t_map(x, r) = r``), so the whitened
rewrite must reproduce the noise law given ``x`` exactly.
"""

import numpy as np

from regulab.dgp import Box, LatentSpace
from regulab.sampling import uniform
from regulab.whitening import DependentFactorization


def _identity(x, r):
    return r


def shifted_noise() -> DependentFactorization:
    """``X ~ U[0,1]``, ``R = X + U`` with ``U ~ U[0,1]`` independent of ``X``."""

    def noise(x, rng):
        return x[:, :1] + rng.random((x.shape[0], 1))

    return DependentFactorization(
        Box([0.0], [1.0]), uniform(0.0, 1.0), noise, _identity, LatentSpace.continuous(1), 1, "shifted"
    )


def white_noise() -> DependentFactorization:
    """``R ~ U[0,1]`` independent of ``X``: already white."""

    def noise(x, rng):
        return rng.random((x.shape[0], 1))

    return DependentFactorization(
        Box([0.0], [1.0]), uniform(0.0, 1.0), noise, _identity, LatentSpace.continuous(1), 1, "white"
    )


def coupled_noise() -> DependentFactorization:
    """Two noise components: ``R1 = X + U1``, ``R2 = R1 * (1 + X) + U2``."""

    def noise(x, rng):
        u = rng.random((x.shape[0], 2))
        r1 = x[:, 0] + u[:, 0]
        r2 = r1 * (1.0 + x[:, 0]) + u[:, 1]
        return np.stack([r1, r2], axis=1)

    return DependentFactorization(
        Box([0.0], [1.0]), uniform(0.0, 1.0), noise, _identity, LatentSpace.continuous(2), 2, "coupled"
    )
