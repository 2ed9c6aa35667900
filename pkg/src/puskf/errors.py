"""Exception hierarchy shared by every filter form."""


class EstimationError(Exception):
    """Base class for all errors raised by this package."""


class NotPositiveDefinite(EstimationError):
    """A Cholesky pivot was zero or negative."""


class NotPositiveSemiDefinite(EstimationError):
    """A UD pivot fell below the negative tolerance."""


class NegativeEigenvalue(EstimationError):
    """A matrix passed to ``symmetric_sqrt`` has a clearly negative eigenvalue."""


class SingularInnovation(EstimationError):
    """The innovation covariance could not be factored."""


class NonFiniteState(EstimationError):
    """Dynamics produced NaN or infinite values."""


class WeightOutOfRange(EstimationError, ValueError):
    """An update weight lies outside [0, 1]."""


class NonPositiveNoise(EstimationError, ValueError):
    """A scalar measurement variance is not strictly positive."""


class NoVisibleFeatures(EstimationError):
    """No landmark projects into the image."""


class DegenerateCloud(EstimationError):
    """A point cloud is too small or collinear for rigid alignment."""


class FilterDiverged(EstimationError):
    """A run was flagged as diverged and the caller asked for an exception."""


class InvalidRunCount(EstimationError, ValueError):
    """A Monte Carlo campaign was requested with no runs."""


class ConfigError(EstimationError, ValueError):
    """A configuration file or command-line option is invalid."""
