"""Benchmark objectives, their metadata, and the standard initial guesses."""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import hilbert

from ._validation import check_int, check_scalar, check_vector
from .exceptions import ConfigError

__all__ = [
    "Problem",
    "initial_guess",
    "IG_TAGS",
    "make_smooth_suite",
    "make_blasting_suite",
    "make_nonsmooth_suite",
    "get_problem",
    "problem_names",
    "woods",
    "chained_rosenbrock",
    "extended_powell",
    "sparse_quartic",
    "dixmaan",
    "blast1",
    "blast2",
    "blast3",
    "hilbert_max",
    "hilbert_sum",
    "crescent",
    "cardinality",
    "cardinality_relaxed",
    "expsin",
    "quadratic",
    "ZERO_TOL",
]

IG_TAGS = ("IG1", "IG2", "IG3")
ZERO_TOL = 1e-12  # |x_i| above this counts as nonzero in the cardinality term
FSTAR_ATOL = 1e-12


@dataclass(frozen=True)
class Problem:
    """An objective with metadata.

    Parameters
    ----------
    name : str
    dim : int
    fun : callable
        ``x -> float``.
    analytic_grad, analytic_hess : callable, optional
    known_xstar : ndarray, optional
    known_fstar : float, optional
    smoothness : {"smooth", "nonsmooth"}
    params : dict
    bounds : tuple of ndarray, optional
        Box ``(lo, hi)`` onto which the solver projects iterates.
    claimed_only : bool
        ``known_xstar`` is a literature claim that does not evaluate to a
        known optimal value.
    unique_xstar : bool
        False when the optimal set contains more than one point.
    """

    name: str
    dim: int
    fun: Callable
    analytic_grad: Optional[Callable] = None
    analytic_hess: Optional[Callable] = None
    known_xstar: Optional[np.ndarray] = None
    known_fstar: Optional[float] = None
    smoothness: str = "smooth"
    params: dict = field(default_factory=dict)
    bounds: Optional[tuple] = None
    claimed_only: bool = False
    unique_xstar: bool = True

    def __post_init__(self):
        if self.smoothness not in ("smooth", "nonsmooth"):
            raise ConfigError(f"bad smoothness tag {self.smoothness!r}")
        if self.known_xstar is not None:
            xs = check_vector(self.known_xstar, name="known_xstar", n=self.dim)
            object.__setattr__(self, "known_xstar", xs)
            if self.known_fstar is not None:
                val = self(xs)
                if abs(val - self.known_fstar) > FSTAR_ATOL:
                    raise ConfigError(
                        f"{self.name}: f(known_xstar) = {val} != known_fstar {self.known_fstar}"
                    )

    def __call__(self, x):
        return float(self.fun(np.asarray(x, dtype=float)))

    eval = __call__

    def project(self, x):
        if self.bounds is None:
            return x
        lo, hi = self.bounds
        return np.clip(x, lo, hi)


def initial_guess(tag, n):
    """``IG1 = ones``, ``IG2 = sin(ones)``, ``IG3 = exp(ones)``."""
    n = check_int(n, "n", minimum=1)
    ones = np.ones(n)
    if tag == "IG1":
        return ones
    if tag == "IG2":
        return np.sin(ones)
    if tag == "IG3":
        return np.exp(ones)
    raise ConfigError(f"unknown initial-guess tag {tag!r}; expected one of {IG_TAGS}")


# --- smooth family ---------------------------------------------------------


def _woods_parts(x, c):
    """Woods-type function; ``c`` holds the eight coefficients."""
    a, b, e, h, p, q, r, s = c
    x1, x2, x3, x4 = x[:4]
    f = (
        a * (x2 - x1**2) ** 2
        + b * (1 - x1) ** 2
        + e * (x4 - x3**2) ** 2
        + h * (1 - x3) ** 2
        + p * ((x2 - 1) ** 2 + q * (x4 - 1) ** 2)
        + r * (x2 - 1) * (x4 - 1)
        + s * np.sum(x**2)
    )
    g = np.zeros_like(x)
    g[0] = -4 * a * x1 * (x2 - x1**2) - 2 * b * (1 - x1)
    g[1] = 2 * a * (x2 - x1**2) + 2 * p * (x2 - 1) + r * (x4 - 1)
    g[2] = -4 * e * x3 * (x4 - x3**2) - 2 * h * (1 - x3)
    g[3] = 2 * e * (x4 - x3**2) + 2 * p * q * (x4 - 1) + r * (x2 - 1)
    g = g + 2 * s * x
    return f, g


_WOODS = (100.0, 1.0, 90.0, 1.0, 10.1, 1.0, 19.8, 0.0)


def woods(dim=4):
    if dim != 4:
        raise ConfigError("woods is defined for dim = 4 only")
    return Problem(
        "woods", 4,
        lambda x: _woods_parts(x, _WOODS)[0],
        analytic_grad=lambda x: _woods_parts(np.asarray(x, float), _WOODS)[1],
        known_xstar=np.ones(4), known_fstar=0.0,
    )


def _rosen(x):
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


def _rosen_grad(x):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    t = x[1:] - x[:-1] ** 2
    g[:-1] += -400.0 * x[:-1] * t - 2.0 * (1.0 - x[:-1])
    g[1:] += 200.0 * t
    return g


def _rosen_hess(x):
    x = np.asarray(x, dtype=float)
    n = x.size
    H = np.zeros((n, n))
    i = np.arange(n - 1)
    H[i, i] += 1200.0 * x[:-1] ** 2 - 400.0 * x[1:] + 2.0
    H[i + 1, i + 1] += 200.0
    H[i, i + 1] = H[i + 1, i] = -400.0 * x[:-1]
    return H


def chained_rosenbrock(dim=2):
    dim = check_int(dim, "dim", minimum=2)
    return Problem(
        "rosenbrock", dim, _rosen, analytic_grad=_rosen_grad, analytic_hess=_rosen_hess,
        known_xstar=np.ones(dim), known_fstar=0.0,
    )


def _powell(x):
    b = x.reshape(-1, 4)
    return float(np.sum(
        (b[:, 0] + 10 * b[:, 1]) ** 2 + 5 * (b[:, 2] - b[:, 3]) ** 2
        + (b[:, 1] - 2 * b[:, 2]) ** 4 + 10 * (b[:, 0] - b[:, 3]) ** 4
    ))


def _powell_grad(x):
    b = np.asarray(x, dtype=float).reshape(-1, 4)
    t1 = b[:, 0] + 10 * b[:, 1]
    t2 = b[:, 2] - b[:, 3]
    t3 = b[:, 1] - 2 * b[:, 2]
    t4 = b[:, 0] - b[:, 3]
    g = np.empty_like(b)
    g[:, 0] = 2 * t1 + 40 * t4**3
    g[:, 1] = 20 * t1 + 4 * t3**3
    g[:, 2] = 10 * t2 - 8 * t3**3
    g[:, 3] = -10 * t2 - 40 * t4**3
    return g.ravel()


def extended_powell(dim=48):
    dim = check_int(dim, "dim", minimum=4)
    if dim % 4:
        raise ConfigError("extended powell needs dim divisible by 4")
    return Problem(
        "powell", dim, _powell, analytic_grad=_powell_grad,
        known_xstar=np.zeros(dim), known_fstar=0.0,
    )


def _sparse_index(n):
    i = np.arange(1, n + 1)
    return i, np.stack([i - 1, (2 * i) % n, (3 * i) % n], axis=1)


def sparse_quartic(dim=48):
    """``sum_i i (x_i^2 + x_{(2i mod n)+1}^2 + x_{(3i mod n)+1}^2)^2`` (1-based)."""
    dim = check_int(dim, "dim", minimum=1)
    w, idx = _sparse_index(dim)

    def fun(x):
        s = np.sum(x[idx] ** 2, axis=1)
        return float(np.sum(w * s * s))

    def grad(x):
        x = np.asarray(x, dtype=float)
        s = np.sum(x[idx] ** 2, axis=1)
        g = np.zeros_like(x)
        contrib = (4.0 * w * s)[:, None] * x[idx]
        np.add.at(g, idx, contrib)
        return g

    return Problem(
        "sparse-quartic", dim, fun, analytic_grad=grad,
        known_xstar=np.zeros(dim), known_fstar=0.0,
    )


def dixmaan(dim=48, alpha=1.0, beta=0.0, gamma=0.125, delta=0.125, kk=(0, 0, 0, 0)):
    """DIXMAAN family; the defaults give variant A (``f* = 1`` at the origin)."""
    dim = check_int(dim, "dim", minimum=3)
    if dim % 3:
        raise ConfigError("dixmaan needs dim divisible by 3")
    m = dim // 3
    r = np.arange(1, dim + 1) / dim
    w1, w2, w3, w4 = (r**k for k in kk)

    def fun(x):
        t1 = alpha * np.sum(w1 * x**2)
        t2 = beta * np.sum(w2[:-1] * x[:-1] ** 2 * (x[1:] + x[1:] ** 2) ** 2)
        t3 = gamma * np.sum(w3[: 2 * m] * x[: 2 * m] ** 2 * x[m:] ** 4)
        t4 = delta * np.sum(w4[:m] * x[:m] * x[2 * m:])
        return float(1.0 + t1 + t2 + t3 + t4)

    def grad(x):
        x = np.asarray(x, dtype=float)
        g = 2 * alpha * w1 * x
        u = x[1:] + x[1:] ** 2
        g[:-1] += 2 * beta * w2[:-1] * x[:-1] * u**2
        g[1:] += 2 * beta * w2[:-1] * x[:-1] ** 2 * u * (1 + 2 * x[1:])
        g[: 2 * m] += 2 * gamma * w3[: 2 * m] * x[: 2 * m] * x[m:] ** 4
        g[m:] += 4 * gamma * w3[: 2 * m] * x[: 2 * m] ** 2 * x[m:] ** 3
        g[:m] += delta * w4[:m] * x[2 * m:]
        g[2 * m:] += delta * w4[:m] * x[:m]
        return g

    return Problem(
        "dixmaan-a", dim, fun, analytic_grad=grad, known_xstar=np.zeros(dim), known_fstar=1.0,
        params=dict(alpha=alpha, beta=beta, gamma=gamma, delta=delta),
    )


def make_smooth_suite(n=48):
    """Woods, chained Rosenbrock, extended Powell, sparse quartic, DIXMAAN-A.

    ``n`` must be divisible by 12 so that every scalable member accepts it.
    """
    return [woods(), chained_rosenbrock(n), extended_powell(n), sparse_quartic(n), dixmaan(n)]


# --- derivative-blasting family -----------------------------------------

_BLAST1 = (1e6, 1000.0, 90000.0, 1000.0, 10100.0, 1000.0, 19800.0, 1.0)


def blast1(dim=5):
    if dim != 5:
        raise ConfigError("blast1 is defined for dim = 5 only")

    def fun(x):
        return _woods_parts(np.asarray(x, float)[:4], _BLAST1[:7] + (0.0,))[0] + float(np.sum(x**2))

    def grad(x):
        x = np.asarray(x, dtype=float)
        g = np.zeros(5)
        g[:4] = _woods_parts(x[:4], _BLAST1[:7] + (0.0,))[1]
        return g + 2.0 * x

    # ones is the literature claim; it does not attain a verified optimum
    return Problem("blast1", 5, fun, analytic_grad=grad, known_xstar=np.ones(5), claimed_only=True)


def blast2(dim=101):
    if dim != 101:
        raise ConfigError("blast2 is defined for dim = 101 only")
    return Problem(
        "blast2", 101, lambda x: 1000.0 * _rosen(x),
        analytic_grad=lambda x: 1000.0 * _rosen_grad(x),
        known_xstar=np.ones(101), known_fstar=0.0,
    )


def blast3(dim=100):
    if dim != 100:
        raise ConfigError("blast3 is defined for dim = 100 only")

    def fun(x):
        return float(1e5 * np.sum(np.cos(5 * np.pi * x)) - 1e3 * np.sum(x**2))

    def grad(x):
        x = np.asarray(x, dtype=float)
        return -5e5 * np.pi * np.sin(5 * np.pi * x) - 2e3 * x

    return Problem("blast3", 100, fun, analytic_grad=grad, known_xstar=np.ones(100), claimed_only=True)


def make_blasting_suite():
    return [blast1(), blast2(), blast3()]


# --- nonsmooth family ----------------------------------------------------


def hilbert_max(dim=50):
    dim = check_int(dim, "dim", minimum=1)
    H = hilbert(dim)
    return Problem(
        "p1", dim, lambda x: float(np.max(np.abs(H @ x))),
        known_xstar=np.zeros(dim), known_fstar=0.0, smoothness="nonsmooth",
    )


def hilbert_sum(dim=50):
    dim = check_int(dim, "dim", minimum=1)
    H = hilbert(dim)
    return Problem(
        "p2", dim, lambda x: float(np.sum(np.abs(H @ x))),
        known_xstar=np.zeros(dim), known_fstar=0.0, smoothness="nonsmooth",
    )


def crescent(dim=2):
    if dim != 2:
        raise ConfigError("p3 is defined for dim = 2 only")

    def fun(x):
        a = x[0] ** 2 + (x[1] - 1) ** 2
        return float(max(a + x[1] - 1, -a + x[1] + 1))

    return Problem("p3", 2, fun, known_xstar=np.zeros(2), known_fstar=0.0, smoothness="nonsmooth")


def _l1_residual(x, b):
    return abs(float(np.sum(x)) - b)


def cardinality(dim=2, lam=1.0, b=1.0):
    """``|1^T x - b| + lam ||x||_0`` on the box ``[0, 1]^n``."""
    dim = check_int(dim, "dim", minimum=1)
    lam = check_scalar(lam, "lambda", positive=True)

    def fun(x):
        return _l1_residual(x, b) + lam * float(np.count_nonzero(np.abs(x) > ZERO_TOL))

    return Problem(
        "p4", dim, fun, known_xstar=np.zeros(dim), known_fstar=abs(b), smoothness="nonsmooth",
        params=dict(lam=lam, b=b), bounds=(np.zeros(dim), np.ones(dim)), unique_xstar=False,
    )


def capped_l1(t, mu):
    """``min(1, |t| / mu)`` elementwise."""
    return np.minimum(1.0, np.abs(t) / mu)


def cardinality_relaxed(dim=2, lam=1.0, mu=1e-2, b=1.0):
    """Continuous relaxation with the capped-l1 penalty."""
    dim = check_int(dim, "dim", minimum=1)
    lam = check_scalar(lam, "lambda", positive=True)
    mu = check_scalar(mu, "mu", positive=True)

    def fun(x):
        return _l1_residual(x, b) + lam * float(np.sum(capped_l1(x, mu)))

    return Problem(
        "p4-relaxed", dim, fun, known_xstar=np.zeros(dim), known_fstar=abs(b),
        smoothness="nonsmooth", params=dict(lam=lam, mu=mu, b=b),
        bounds=(np.zeros(dim), np.ones(dim)), unique_xstar=False,
    )


def make_nonsmooth_suite(lam=1.0, mu=1e-2):
    return [hilbert_max(), hilbert_sum(), crescent(), cardinality(lam=lam),
            cardinality_relaxed(lam=lam, mu=mu)]


# --- probe helpers -------------------------------------------------------


def expsin(dim=2):
    if dim != 2:
        raise ConfigError("expsin is defined for dim = 2 only")
    return Problem(
        "expsin", 2, lambda x: float(np.exp(x[0]) + np.sin(x[1])),
        analytic_grad=lambda x: np.array([np.exp(x[0]), np.cos(x[1])]),
        analytic_hess=lambda x: np.diag([np.exp(x[0]), -np.sin(x[1])]),
    )


def quadratic(dim=2, center=None, hess=None):
    """``1/2 (x - a)^T H (x - a)`` with ``a = center`` (default ``0.5``)."""
    dim = check_int(dim, "dim", minimum=1)
    a = np.full(dim, 0.5) if center is None else check_vector(center, n=dim)
    H = np.eye(dim) if hess is None else np.asarray(hess, dtype=float)

    def fun(x):
        d = x - a
        return float(0.5 * d @ H @ d)

    return Problem(
        "quadratic", dim, fun, analytic_grad=lambda x: H @ (np.asarray(x, float) - a),
        analytic_hess=lambda x: H.copy(), known_xstar=a, known_fstar=0.0,
    )


_REGISTRY = {
    "woods": woods,
    "rosenbrock": chained_rosenbrock,
    "powell": extended_powell,
    "sparse-quartic": sparse_quartic,
    "dixmaan-a": dixmaan,
    "blast1": blast1,
    "blast2": blast2,
    "blast3": blast3,
    "p1": hilbert_max,
    "p2": hilbert_sum,
    "p3": crescent,
    "p4": cardinality,
    "p4-relaxed": cardinality_relaxed,
    "expsin": expsin,
    "quadratic": quadratic,
}


def problem_names():
    return sorted(_REGISTRY)


def get_problem(name, dim=None, **params):
    """Build a registered problem by name.

    Extra keyword arguments (``lam``, ``mu``) go to the factory; ``None``
    values are ignored.
    """
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ConfigError(f"unknown problem {name!r}; choose from {problem_names()}") from None
    kwargs = {k: v for k, v in params.items() if v is not None}
    if dim is not None:
        kwargs["dim"] = dim
    try:
        return factory(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name!r}: {exc}") from None
