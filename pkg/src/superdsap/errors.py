"""Exception types raised across the package."""


class SuperDSAPError(Exception):
    """Base class for all package errors."""


class InputError(SuperDSAPError, ValueError):
    """Malformed caller input: wrong dimension, non-finite entries, bad index."""


class InvalidSetError(SuperDSAPError, ValueError):
    """A convex set whose defining data violates its invariants."""


class InvalidAmalgamatorError(SuperDSAPError, ValueError):
    pass


class ConfigurationError(SuperDSAPError, ValueError):
    """A run configuration (schedule, stop rule, parameters) is invalid."""


class ObjectiveError(SuperDSAPError, ArithmeticError):
    pass


class TraceError(SuperDSAPError, ValueError):
    """A trace cannot be analysed (thinned, missing values, mismatched runs)."""
