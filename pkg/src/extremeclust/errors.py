"""Exception and warning types shared across the package."""


class ExtremeClustError(Exception):
    """Base class for all package errors."""


class InvalidInputError(ExtremeClustError, ValueError):
    """An argument violates the documented preconditions."""


class DegenerateInputError(InvalidInputError):
    """Input is well-typed but degenerate (zero vector, zero row, ...)."""


class DomainError(InvalidInputError):
    """A closed-form quantity is undefined for the given parameters."""


class InstanceTooLargeError(InvalidInputError):
    """Exhaustive search refused because the instance exceeds its guard."""


class DegenerateResultError(ExtremeClustError):
    """A computation produced an unusable result (e.g. empty subsample)."""


class DegenerateWarning(UserWarning):
    """Something degenerate happened but a result is still returned."""
