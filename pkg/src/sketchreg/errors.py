"""Exception types raised across the toolkit."""


class SketchRegError(Exception):
    """Base class for toolkit errors."""


class RankDeficient(SketchRegError, ArithmeticError):
    """A factorization or sketch lost column rank.

    Usually the embedding dimension is too small, or the input itself is
    rank deficient and the SVD path should be used instead.
    """


class NoConvergence(SketchRegError, ArithmeticError):
    pass


class IllConditioned(SketchRegError, ArithmeticError):
    pass


class DimensionMismatch(SketchRegError, ValueError):
    pass


class IllegalStack(SketchRegError, ValueError):
    pass


class EpsOutOfRange(SketchRegError, ValueError):
    pass


class MaxIters(SketchRegError):
    """An iterative solver hit its iteration cap.

    The partial result is kept on ``report`` so callers can still inspect it.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class Divergence(SketchRegError):
    """Chebyshev iteration blew up, typically because the supplied singular
    value interval does not contain the spectrum."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
