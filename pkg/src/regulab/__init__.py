"""Numerical verification toolkit for factored data-generating processes.

A process ``L = T(X, R)`` is described by a deterministic map ``T``, an input
domain ``K`` and a noise law for ``R`` independent of ``X``. The toolkit
samples conditional laws, estimates derived tasks ``E[f(L) | X = x]``,
whitens x-dependent noise, and probes the regularity conditions under which
every bounded derived task is continuous in ``x``.
"""

__version__ = "0.1.0"

from regulab.errors import (
    BoundViolationError,
    ConfigError,
    DataError,
    DegenerateDrawError,
    FitError,
    LatentEvaluationError,
    RegulabError,
)
from regulab.sampling import DistributionSpec, SeedSpec, draw, split

__all__ = [
    "__version__",
    "BoundViolationError",
    "ConfigError",
    "DataError",
    "DegenerateDrawError",
    "DistributionSpec",
    "FitError",
    "LatentEvaluationError",
    "RegulabError",
    "SeedSpec",
    "draw",
    "split",
]
