"""Exception hierarchy.

Errors raised while reading configs derive from :class:`ConfigError`; errors
raised by the numerical routines derive from :class:`SolverError`. The CLI maps
the two families to distinct exit codes.
"""


class DelayControlError(Exception):
    """Base class for all package errors."""


class ConfigError(DelayControlError, ValueError):
    """Malformed problem configuration."""


class SolverError(DelayControlError):
    """A numerical routine could not produce a result."""


class GridError(SolverError, ValueError):
    """Grid construction failed or two grids do not match."""


class CompatibilityViolation(SolverError, ValueError):
    """Initial state is not admissible for the equation (neutral case needs y = x0(0))."""


class MissingDerivative(CompatibilityViolation):
    """Neutral equation was given an initial state without ``x0_deriv``."""


class HorizonError(SolverError, ValueError):
    """Requested time exceeds the horizon of the data."""


class MomentViolation(SolverError, ValueError):
    """Control generator does not satisfy the moment constraints."""


class DegenerateMomentSystem(SolverError):
    """Moment equations for the optimal constants are singular."""


class MultipleRootUnsupported(SolverError):
    """Characteristic polynomial has clustered roots."""


class NotAZero(SolverError, ValueError):
    """Point is not a zero of the characteristic function."""


class ZeroSearchError(SolverError):
    """Argument-principle search or Newton refinement failed."""
