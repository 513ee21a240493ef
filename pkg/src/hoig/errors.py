"""Exception hierarchy shared by every subpackage."""


class HoigError(Exception):
    """Base class for all errors raised by hoig."""


class DimensionMismatch(HoigError, ValueError):
    pass


class OrderUnderflow(HoigError, ValueError):
    """Contraction was requested on a first-order tensor."""


class OrderMismatch(HoigError, ValueError):
    pass


class OrderCapExceeded(HoigError, ValueError):
    pass


class NumericalError(HoigError, ArithmeticError):
    """Base for failures that map to the CLI's numerical exit code."""


class StepError(NumericalError):
    """A finite-difference step vanished in floating point."""


class NotPositiveDefinite(NumericalError):
    def __init__(self, message, condition=None, min_pivot=None):
        super().__init__(message)
        self.condition = condition
        self.min_pivot = min_pivot


class IterationLimit(NumericalError):
    """Raised by iterative fitters; ``best`` carries the best-so-far result."""

    def __init__(self, message, best=None, diagnostics=None):
        super().__init__(message)
        self.best = best
        self.diagnostics = diagnostics or {}


class DataError(HoigError, ValueError):
    """Malformed or unusable input data (CSV, JSON, CLI literals)."""
