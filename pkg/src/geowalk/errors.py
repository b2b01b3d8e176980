"""Exception types raised across the package."""


class GeowalkError(Exception):
    """Base class for all package errors."""


class InvalidPointError(GeowalkError, ValueError):
    """A point does not lie on the manifold (off-sphere, nonpositive height, ...)."""


class CutLocusError(GeowalkError, ValueError):
    """The requested geodesic is not unique because the target lies in the cut locus."""


class DegenerateCurveError(GeowalkError, ValueError):
    """A curve has repeated or non-increasing times."""


class DomainError(GeowalkError, ValueError):
    """An argument lies outside the validity domain of a formula."""


class NonConvergenceError(GeowalkError, RuntimeError):
    """An iterative solver exhausted its iteration budget."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class AllZeroCountsError(GeowalkError, RuntimeError):
    """No Monte Carlo level registered enough hits to fit a rate."""


class SchemaVersionError(GeowalkError, ValueError):
    """A persisted report was written with an incompatible schema version."""


class ConfigError(GeowalkError, ValueError):
    """An experiment configuration failed validation.

    ``errors`` holds every problem found, not just the first one.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
