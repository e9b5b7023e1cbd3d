"""Exception hierarchy used across the package."""


class QmnewtError(Exception):
    """Base class for all package errors."""


class ConfigError(QmnewtError, ValueError):
    """Invalid configuration or problem parameters."""


class ShapeError(QmnewtError, ValueError):
    """Array dimensions do not agree."""


class WindowRangeError(QmnewtError, IndexError):
    """A window index lies outside the stored point history."""


class EvaluationError(QmnewtError, ValueError):
    """An objective value or point is not finite."""


class InitializationError(QmnewtError, RuntimeError):
    """The initial stencil could not be evaluated."""


class DegenerateGeometryError(QmnewtError, ArithmeticError):
    """A step in the window is (numerically) zero.

    Attributes
    ----------
    index : int or None
        Position of the offending step within the window (1-based, so
        ``index = j`` refers to ``window[j] - window[j-1]``).
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NumericalFailureError(QmnewtError, ArithmeticError):
    """A linear solve failed even after fallbacks.

    Attributes
    ----------
    residual : float
        Relative residual achieved by the last attempt (``nan`` if unknown).
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class UpdateRejectedError(QmnewtError, ArithmeticError):
    """A rank-one update was skipped because its denominator is too small."""
