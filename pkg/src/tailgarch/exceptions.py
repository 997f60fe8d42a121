"""Exception hierarchy shared across the package."""


class TailGarchError(Exception):
    """Base class for all package errors."""


class InvalidInputError(TailGarchError, ValueError):
    """Malformed arguments: wrong length, non-finite values, bad parameters."""


class InvalidConfigError(TailGarchError, ValueError):
    """Inconsistent configuration, e.g. fractiles that trim the whole sample."""


class InvalidDataError(TailGarchError, ValueError):
    """Data that cannot support estimation (degenerate, too short, too many zeros)."""


class OptimizationError(TailGarchError, RuntimeError):
    """The objective could not be evaluated anywhere the optimizer looked."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = [] if trace is None else list(trace)


class NumericalRankError(TailGarchError, ArithmeticError):
    """A matrix that must be positive definite is singular."""


class InvalidRestrictionError(TailGarchError, ValueError):
    """A Wald restriction gradient without full row rank."""


class ParseError(TailGarchError, ValueError):
    """A data file row that cannot be parsed."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row
