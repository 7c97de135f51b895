"""Exception types shared across the package."""


class PerifouError(Exception):
    """Base class for all package-specific errors."""


class NonnegativeEmbeddingFailure(PerifouError):
    """Circulant embedding produced a significantly negative eigenvalue."""


class FactorizationFailure(PerifouError):
    """Covariance factorization rejected (size guard or not positive definite)."""


class InvalidStep(PerifouError):
    """Simulation step does not divide the unit period exactly."""


class GridMismatch(PerifouError):
    """Two sample paths do not share grid and driving increments."""


class LengthMismatch(PerifouError):
    """Integrand and increment vectors have incompatible lengths."""


class PartialPeriod(PerifouError):
    """Observation window does not span a whole number of periods."""


class DegenerateDesign(PerifouError):
    """Residual variance of the path is numerically zero; the
    mean-reversion rate is unidentifiable from these data."""


class MissingDriver(PerifouError):
    """Estimation mode requires driver increments the path does not carry."""


class ConfigError(PerifouError):
    """Malformed or inadmissible configuration."""
