"""Exception types raised by the engine."""


class SplitTreeError(Exception):
    """Base class for all errors raised by this package."""


class InvalidConfig(SplitTreeError, ValueError):
    """A parameter or configuration key is invalid.

    ``key`` names the offending configuration entry when there is one.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class DivergentMoment(SplitTreeError, ArithmeticError):
    """An exponential moment of the lifespan measure is infinite."""


class NonConvergence(SplitTreeError, ArithmeticError):
    pass


class NoNegativeRoot(SplitTreeError, ArithmeticError):
    pass


class GridTooCoarse(SplitTreeError, ValueError):
    pass


class OutOfRange(SplitTreeError, ValueError):
    pass


class HorizonTooShort(SplitTreeError, ValueError):
    """The grid ends before the truncation error of an improper integral
    drops below the requested tolerance."""


class WrongRegime(SplitTreeError, ValueError):
    pass


class RejectionBudgetExceeded(SplitTreeError, RuntimeError):
    pass


class ZeroVariance(SplitTreeError, ArithmeticError):
    pass


class TooFewSamples(SplitTreeError, ValueError):
    pass
