"""Exception types shared across the package."""


class HetresError(Exception):
    """Base class for all package errors."""


class IntegrationError(HetresError, ArithmeticError):
    """A trajectory became non-finite. ``time`` holds the blow-up time (or step)."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class StabilityError(HetresError, ValueError):
    pass


class InstabilityError(HetresError, ArithmeticError):
    """A discrete recursion diverged (NARMA's known failure mode)."""


class InvalidDelayError(HetresError, ValueError):
    pass


class ZeroVarianceError(HetresError, ValueError):
    pass


class RescaleError(HetresError, ValueError):
    pass


class InfeasibleRateError(HetresError, ValueError):
    pass


class UndefinedMeasureError(HetresError, ValueError):
    """Cosine-type measure or score on a zero-norm / constant series."""


class DegenerateStateError(HetresError, ValueError):
    pass


class AlignmentError(HetresError, ValueError):
    pass


class InsufficientDataError(HetresError, ValueError):
    pass


class CorruptionError(HetresError, IOError):
    pass


class UnsupportedVersionError(HetresError, IOError):
    pass


class ConfigError(HetresError, ValueError):
    pass
