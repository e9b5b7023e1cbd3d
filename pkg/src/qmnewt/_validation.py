"""Small input-checking helpers."""

from numbers import Integral, Real

import numpy as np

from .exceptions import ConfigError, EvaluationError, ShapeError


def check_vector(x, name="x", n=None, finite=True):
    """Return ``x`` as a 1-D float array, optionally checking length."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise ShapeError(f"{name} must have length {n}, got {arr.shape[0]}")
    if finite and not np.all(np.isfinite(arr)):
        raise EvaluationError(f"{name} contains non-finite entries")
    return arr


def check_point(x, n=None, name="x"):
    """Validate a finite point; copies so callers cannot alias state."""
    return np.array(check_vector(x, name=name, n=n), dtype=float, copy=True)


def check_square(M, name="M", n=None):
    arr = np.asarray(M, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise ShapeError(f"{name} must be {n}x{n}, got {arr.shape}")
    return arr


def check_scalar(value, name, positive=False, finite=True):
    if isinstance(value, bool) or not isinstance(value, (Real, np.floating, np.integer)):
        raise ConfigError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if finite and not np.isfinite(value):
        raise ConfigError(f"{name} must be finite")
    if positive and not value > 0:
        raise ConfigError(f"{name} must be > 0, got {value}")
    return value


def check_int(value, name, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (Integral, np.integer)):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return value


def check_choice(value, name, choices):
    if value not in choices:
        raise ConfigError(f"{name} must be one of {sorted(choices)}, got {value!r}")
    return value


def is_symmetric(M, rtol=1e-14):
    scale = max(1.0, float(np.max(np.abs(M))) if M.size else 0.0)
    return bool(np.max(np.abs(M - M.T), initial=0.0) <= rtol * scale)


def frozen(arr):
    """Return a read-only copy of ``arr``."""
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out
