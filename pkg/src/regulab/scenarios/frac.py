"""``L1 = X + R`` and ``L2 = X * R`` with ``R ~ U[0, 1]``.

Under ``frac`` the first gives a flat task curve at 1/2; the second jumps
at ``x = 0`` because its conditional density blows up like ``1/|x|`` there.
"""

from regulab.dgp import Box, Factorization, LatentSpace
from regulab.sampling import uniform
from regulab.scenarios.base import Scenario, line_grid


def _sum(x, r):
    return x[:, 0] + r[:, 0]


def _product(x, r):
    return x[:, 0] * r[:, 0]


def _scenario(name, t_map, x_lo, x_hi, points, latent_range):
    fact = Factorization(Box([x_lo], [x_hi]), uniform(0.0, 1.0), t_map, LatentSpace.continuous(1), name)
    return Scenario(
        name,
        fact,
        uniform(x_lo, x_hi),
        (0.0,),
        line_grid(x_lo, x_hi, points),
        0,
        latent_range,
    )


def frac_l1(x_lo: float = -2.0, x_hi: float = 2.0, points: int = 101) -> Scenario:
    return _scenario("frac_l1", _sum, x_lo, x_hi, points, (x_lo, x_hi + 1.0))


def frac_l2(x_lo: float = -2.0, x_hi: float = 2.0, points: int = 101) -> Scenario:
    span = max(abs(x_lo), abs(x_hi))
    return _scenario("frac_l2", _product, x_lo, x_hi, points, (-span, span))


def frac_scenarios(x_lo: float = -2.0, x_hi: float = 2.0, points: int = 101) -> dict:
    """Both motivating factorizations, keyed ``frac_l1`` and ``frac_l2``."""
    return {"frac_l1": frac_l1(x_lo, x_hi, points), "frac_l2": frac_l2(x_lo, x_hi, points)}
