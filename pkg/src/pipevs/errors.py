"""Exception hierarchy shared across the package."""


class PipevsError(Exception):
    """Base class for all package errors."""


class GimbalLock(PipevsError):
    """Pitch too close to +/- pi/2 for the Euler-rate map."""


class NonFinite(PipevsError):
    """Simulation state diverged or became non-finite."""


class OutOfRange(PipevsError):
    """Query outside the valid domain (e.g. arclength past the pipe end)."""


class BehindCamera(PipevsError):
    """Point does not lie in front of the camera."""


class DegenerateLine(PipevsError):
    """The two points defining a line coincide."""


class InvalidWidth(PipevsError):
    """Apparent pipe width is not strictly positive."""


class InvalidDepth(PipevsError):
    """Feature depth is not strictly positive."""


class InvalidObservation(PipevsError):
    """An operation required a valid feature observation."""


class NotInitialized(PipevsError):
    """Estimator or predictor used before its first valid image."""


class SingularInnovation(PipevsError):
    """Innovation covariance is numerically singular."""


class ExcessiveTilt(PipevsError):
    """Attitude too tilted to produce a vertical thrust component."""


class DegenerateJacobian(PipevsError):
    """Feature Jacobian has no singular value above the cutoff."""


class EmptySeries(PipevsError):
    """Metric requested over an empty series."""


class ConfigError(PipevsError):
    """Scenario configuration is invalid."""
