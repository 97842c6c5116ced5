"""Exception hierarchy shared by the simulator and the command-line layer."""


class DechistError(Exception):
    """Base class for all package errors."""


class ValidationError(DechistError, ValueError):
    """Bad input: violated precondition, malformed config, mismatched grids.

    ``field`` names the offending parameter when one can be identified.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class GridMismatchError(ValidationError):
    pass


class ZeroNormError(ValidationError):
    pass


class PartitionError(ValidationError):
    """Projectors are not exhaustive, not exclusive, or not idempotent."""


class CapExceededError(ValidationError):
    """A history set is larger than the configured combinatorial cap."""


class InvariantViolation(DechistError, ArithmeticError):
    """A numerical invariant (norm, trace, Hermiticity...) tripped during a run."""

    def __init__(self, message: str, check: str | None = None):
        super().__init__(message)
        self.check = check
