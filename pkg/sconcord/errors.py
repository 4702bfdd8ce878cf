"""Exception hierarchy shared by the solvers, problems and harness."""


class SconcordError(Exception):
    """Base class for every error raised by this package."""


class DomainError(SconcordError, ValueError):
    """An argument lies outside the domain of the function being evaluated."""


class AssumptionViolation(SconcordError, ArithmeticError):
    """A positive-definiteness assumption failed at a queried point."""


class IncompatibleRunError(SconcordError):
    """The requested method cannot be run on the requested problem."""


class InstanceFormatError(SconcordError):
    """A serialized instance is missing files or has inconsistent metadata."""
