"""Point-history window and quadratic model containers.

The window stores ``n + 1`` points ``x_{k-n}, ..., x_k`` (oldest first) so
that every step ``sigma_i = x_i - x_{i-1}`` for ``i = k-n+1, ..., k`` can be
formed. Indices accepted by :func:`sigma` and :func:`tau_gap` are absolute
iteration indices; ``k`` is ``state.iter_index``.
"""

from dataclasses import dataclass, replace

import numpy as np

from ._validation import check_point, check_square, check_vector, frozen, is_symmetric
from .exceptions import ConfigError, EvaluationError, ShapeError, WindowRangeError

__all__ = [
    "QuadraticModel",
    "ModelState",
    "sigma",
    "tau_gap",
    "steps",
    "gaps",
    "model_gradient_at",
    "push_point",
]


@dataclass(frozen=True)
class QuadraticModel:
    """Gradient ``g`` at the newest point, symmetric Hessian ``G`` and weight ``nu``."""

    g: np.ndarray
    G: np.ndarray
    nu: float = 1.0

    def __post_init__(self):
        g = check_vector(self.g, name="g")
        G = check_square(self.G, name="G", n=g.shape[0])
        if not np.all(np.isfinite(G)):
            raise EvaluationError("G contains non-finite entries")
        if not is_symmetric(G):
            raise ConfigError("G must be symmetric")
        if not (np.isfinite(self.nu) and self.nu > 0):
            raise ConfigError(f"nu must be finite and > 0, got {self.nu}")
        object.__setattr__(self, "g", frozen(g))
        object.__setattr__(self, "G", frozen(G))
        object.__setattr__(self, "nu", float(self.nu))

    @property
    def n(self):
        return self.g.shape[0]

    @classmethod
    def identity(cls, g, nu=1.0):
        g = check_vector(g, name="g")
        return cls(g, np.eye(g.shape[0]), nu)


@dataclass(frozen=True)
class ModelState:
    """Immutable snapshot of the method's memory.

    Parameters
    ----------
    window : array_like, shape (n + 1, n)
        Points ordered oldest to newest.
    fvals : array_like, shape (n + 1,)
        Objective values at ``window`` rows.
    model : QuadraticModel
        Current model, anchored at ``window[-1]``.
    prev_model : QuadraticModel, optional
        Model of the previous iteration, anchored at ``window[-2]``.
        Defaults to ``model``.
    iter_index : int
        Absolute iteration index ``k`` of the newest point.
    """

    window: np.ndarray
    fvals: np.ndarray
    model: QuadraticModel
    prev_model: QuadraticModel = None
    iter_index: int = 0

    def __post_init__(self):
        W = np.asarray(self.window, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1] + 1:
            raise ShapeError(f"window must have shape (n+1, n), got {W.shape}")
        if not np.all(np.isfinite(W)):
            raise EvaluationError("window contains non-finite points")
        n = W.shape[1]
        fv = check_vector(self.fvals, name="fvals", n=n + 1)
        if self.model.n != n:
            raise ShapeError("model dimension does not match window")
        prev = self.model if self.prev_model is None else self.prev_model
        if prev.n != n:
            raise ShapeError("prev_model dimension does not match window")
        if int(self.iter_index) < 0:
            raise ConfigError("iter_index must be nonnegative")
        object.__setattr__(self, "window", frozen(W))
        object.__setattr__(self, "fvals", frozen(fv))
        object.__setattr__(self, "prev_model", prev)
        object.__setattr__(self, "iter_index", int(self.iter_index))

    @property
    def n(self):
        return self.window.shape[1]

    @property
    def x_k(self):
        return self.window[-1]

    @property
    def f_k(self):
        return float(self.fvals[-1])

    def with_model(self, model):
        return replace(self, model=model)


def _slot(state, i, lo):
    """Map absolute index ``i`` to a row of ``state.window``."""
    k, n = state.iter_index, state.n
    j = int(i) - (k - n)
    if j < lo or j > n:
        raise WindowRangeError(
            f"index {i} outside window [{k - n + lo}, {k}] (k={k}, n={n})"
        )
    return j


def sigma(state, i):
    """Step ``x_i - x_{i-1}`` for ``i`` in ``[k-n+1, k]``."""
    j = _slot(state, i, 1)
    return state.window[j] - state.window[j - 1]


def tau_gap(state, i):
    """Displacement ``x_k - x_i`` for ``i`` in ``[k-n, k]``."""
    j = _slot(state, i, 0)
    return state.window[-1] - state.window[j]


def steps(state):
    """All window steps as rows, ``sigma_{k-n+1}, ..., sigma_k``."""
    return np.diff(state.window, axis=0)


def gaps(state):
    """Rows ``x_k - x_i`` for ``i = k-n+1, ..., k`` (last row is zero)."""
    return state.window[-1] - state.window[1:]


def model_gradient_at(model, x_k, x):
    """Gradient of the model transported from its anchor: ``g + G (x - x_k)``."""
    n = model.n
    x_k = check_vector(x_k, name="x_k", n=n)
    x = check_vector(x, name="x", n=n)
    return model.g + model.G @ (x - x_k)


def push_point(state, x_new, f_new):
    """Drop the oldest point, append ``x_new`` and advance ``k``.

    The current model becomes ``prev_model``; the caller installs the
    updated model with :meth:`ModelState.with_model`.
    """
    x_new = check_point(x_new, n=state.n, name="x_new")
    f_new = float(f_new)
    if not np.isfinite(f_new):
        raise EvaluationError(f"f_new is not finite: {f_new}")
    window = np.vstack([state.window[1:], x_new])
    fvals = np.append(state.fvals[1:], f_new)
    return ModelState(
        window=window,
        fvals=fvals,
        model=state.model,
        prev_model=state.model,
        iter_index=state.iter_index + 1,
    )
