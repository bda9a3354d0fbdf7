"""Exception types raised across the package."""


class CountMixError(Exception):
    """Base class for all package errors."""


class NonConvergence(CountMixError):
    """An iterative routine hit its iteration cap."""


class NotStochasticallyOrdered(CountMixError):
    """Neither distribution stochastically dominates the other."""


class DimensionMismatch(CountMixError, ValueError):
    pass


class InvalidThinningParam(CountMixError, ValueError):
    pass


class InsufficientSignal(CountMixError):
    """Too few grid points carry enough disagreement events to fit a decay rate."""


class DegenerateDesign(CountMixError, ValueError):
    """The lagged design has zero energy (all-zero path)."""


class ParseError(CountMixError, ValueError):
    pass


class ValidationError(CountMixError, ValueError):
    pass
