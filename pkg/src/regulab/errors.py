"""Exception hierarchy shared by every module."""


class RegulabError(Exception):
    """Base class for toolkit errors."""


class ConfigError(RegulabError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class LatentEvaluationError(RegulabError):
    """The deterministic map failed (or produced non-finite output) at (x, r)."""

    def __init__(self, x, r, cause=None):
        self.x = x
        self.r = r
        self.cause = cause
        msg = f"latent map failed at x={x!r}, r={r!r}"
        if cause is not None:
            msg += f": {cause}"
        super().__init__(msg)


class BoundViolationError(RegulabError):
    """A derived task exceeded its declared essential-supremum bound."""

    def __init__(self, value, bound):
        self.value = value
        self.bound = bound
        super().__init__(f"|f(theta)| = {value!r} exceeds declared bound {bound!r}")


class DegenerateDrawError(RegulabError):
    """Tied preference values in a sampled market.

    ``rows`` lists the offending sample rows so callers can resample them.
    """

    def __init__(self, rows, message="tied preference values"):
        self.rows = rows
        super().__init__(f"{message} in {len(rows)} row(s)")


class FitError(RegulabError):
    """A conditioning cell of a CDF chain could not be fitted."""


class DataError(RegulabError):
    """Input data is malformed (non-finite values, wrong shape, bad CSV)."""
