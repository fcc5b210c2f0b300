"""Exception hierarchy shared by every module."""


class AggrevatedError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(AggrevatedError, ValueError):
    """Inconsistent shapes, bad hyperparameters or incompatible components."""


class PolicyError(AggrevatedError, ValueError):
    """A policy produced an invalid action distribution."""


class NumericError(AggrevatedError, ArithmeticError):
    """Non-finite parameters, gradients or solver iterates."""


class TransitionError(AggrevatedError, ValueError):
    """An illegal parser transition was requested."""


class QueryRangeError(AggrevatedError, IndexError):
    """An oracle query fell outside the environment's horizon or state space."""


class UnsupportedModeError(AggrevatedError, NotImplementedError):
    """The requested quantity is unavailable for this oracle or environment."""


class DataError(AggrevatedError, ValueError):
    """Malformed trajectories or empty sample sets."""


class DegenerateDirectionError(AggrevatedError, ValueError):
    """A search direction is not a descent direction (g . delta <= 0)."""


class OracleError(AggrevatedError, RuntimeError):
    """A numerical test oracle failed to converge."""


class FitError(AggrevatedError, ValueError):
    """A log-log fit was requested on nonpositive data."""
