"""Exception types raised across the package."""


class LindjumpError(Exception):
    """Base class for all package errors."""


class DimensionError(LindjumpError, ValueError):
    """Array sizes do not match the configurational dimension."""


class InputError(LindjumpError, ValueError):
    """Non-finite or otherwise unusable numeric input."""


class NumericalCorruptionError(LindjumpError, ArithmeticError):
    """A quantity that must be real/non-negative/bounded drifted beyond tolerance."""


class StationaryAmbiguityError(LindjumpError):
    """The generator does not have a unique stationary state."""

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class SpecError(LindjumpError, ValueError):
    """A model document failed validation; ``violations`` lists every problem found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid model spec:\n  - " + "\n  - ".join(self.violations))


class UnderflowError(LindjumpError, ArithmeticError):
    """Conditional propagation lost all norm; use a shorter step."""


class DarkStateError(LindjumpError):
    """No further event occurs before the time cap (zero total event rate)."""

    def __init__(self, message, residual_survival=None, partial_log=None):
        super().__init__(message)
        self.residual_survival = residual_survival
        self.partial_log = partial_log


class StepSizeError(LindjumpError, ValueError):
    """The fine time step is too large for the current event rate."""


class NoEventError(LindjumpError):
    """Channel selection requested while every channel rate is zero."""


class InvalidChannelError(LindjumpError, ValueError):
    """A jump was requested on a channel with zero weight, or an unknown label."""


class GridMismatchError(LindjumpError, ValueError):
    """Curves/surfaces were tabulated on incompatible grids."""


class InsufficientEventsError(LindjumpError, ValueError):
    """Too few events in a log to build the requested estimator."""


class CoverageError(LindjumpError, ValueError):
    """A log does not cover the requested time window."""
