"""Exception types shared across the package."""


class FuzzevalError(Exception):
    """Base class for all errors raised by this package."""


class DataValidationError(FuzzevalError):
    """A dataset or input file violates its schema or invariants."""


class ComputationError(FuzzevalError):
    """A statistical computation cannot proceed (degenerate input, rank
    deficiency, failed resampling, ...)."""
