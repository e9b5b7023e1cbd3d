"""Dense linear-algebra kernels: restarted GMRES, damped Newton solves and
rank-one inverse updates."""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from ._validation import check_square, check_vector
from .exceptions import NumericalFailureError, ShapeError, UpdateRejectedError

__all__ = [
    "GmresResult",
    "gmres",
    "lu_solve",
    "solve_damped",
    "sherman_morrison",
    "sr1_inverse_update",
    "bfgs_inverse_update",
    "spectral_norm",
]

LAMBDA_MAX = 1e8


@dataclass(frozen=True)
class GmresResult:
    """Outcome of :func:`gmres`.

    ``breakdown`` flags a vanishing Arnoldi vector that did not yield a
    solution (singular operator); ``stagnated`` flags a restart cycle that
    reduced the residual by less than a factor of 10.
    """

    x: np.ndarray
    converged: bool
    residual: float
    iterations: int
    breakdown: bool = False
    stagnated: bool = False


def _as_operator(apply, n):
    if callable(apply):
        return apply
    M = np.asarray(apply, dtype=float)
    if M.shape != (n, n):
        raise ShapeError(f"operator shape {M.shape} does not match rhs length {n}")
    return lambda v: M @ v


def _givens(a, b):
    if b == 0.0:
        return 1.0, 0.0
    r = np.hypot(a, b)
    return a / r, b / r


def gmres(apply, b, tol=1e-10, restart=None, max_iter=200, x0=None):
    """Restarted GMRES with modified Gram-Schmidt Arnoldi.

    Parameters
    ----------
    apply : callable or ndarray
        Linear operator ``v -> A v`` or a dense square matrix.
    b : array_like
        Right-hand side.
    tol : float
        Target relative residual ``||A x - b|| / ||b||``.
    restart : int, optional
        Krylov subspace size per cycle; defaults to ``min(n, 30)``.
    max_iter : int
        Total number of operator applications allowed.

    Returns
    -------
    GmresResult
    """
    b = check_vector(b, name="b")
    n = b.shape[0]
    A = _as_operator(apply, n)
    if tol <= 0:
        raise ValueError("tol must be > 0")
    m = max(1, min(n, 30 if restart is None else int(restart)))
    x = np.zeros(n) if x0 is None else check_vector(x0, name="x0", n=n).copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return GmresResult(np.zeros(n), True, 0.0, 0)

    r = b - A(x)
    beta = np.linalg.norm(r)
    total = 0
    while True:
        if beta <= tol * bnorm:
            return GmresResult(x, True, beta / bnorm, total)
        if total >= max_iter:
            return GmresResult(x, False, beta / bnorm, total)
        beta_start = beta
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        e = np.zeros(m + 1)
        e[0] = beta
        V[0] = r / beta
        used = 0
        broke = False
        for j in range(m):
            w = A(V[j])
            total += 1
            wnorm0 = np.linalg.norm(w)
            for _ in range(2):  # one pass of re-orthogonalization
                for i in range(j + 1):
                    hij = w @ V[i]
                    H[i, j] += hij
                    w = w - hij * V[i]
            h = np.linalg.norm(w)
            H[j + 1, j] = h
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            cs[j], sn[j] = _givens(H[j, j], H[j + 1, j])
            H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
            H[j + 1, j] = 0.0
            e[j + 1] = -sn[j] * e[j]
            e[j] = cs[j] * e[j]
            used = j + 1
            if h <= 1e-14 * max(wnorm0, 1e-300):
                broke = True
                break
            V[j + 1] = w / h
            if abs(e[j + 1]) <= tol * bnorm or total >= max_iter:
                break
        R = H[:used, :used]
        if np.any(np.abs(np.diag(R)) <= 1e-300):
            y = np.linalg.lstsq(R, e[:used], rcond=None)[0]
        else:
            y = sla.solve_triangular(R, e[:used])
        x = x + V[:used].T @ y
        r = b - A(x)
        beta = np.linalg.norm(r)
        rel = beta / bnorm
        if rel <= tol:
            return GmresResult(x, True, rel, total)
        if broke:
            return GmresResult(x, False, rel, total, breakdown=True)
        if beta > beta_start / 10.0:
            return GmresResult(x, False, rel, total, stagnated=True)


def lu_solve(M, b):
    """Dense LU solve with partial pivoting; returns ``(x, relative_residual)``."""
    M = check_square(M, name="M")
    b = check_vector(b, name="b", n=M.shape[0])
    try:
        with np.errstate(all="ignore"), warnings.catch_warnings():
            # singularity shows up in the residual below
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu = sla.lu_factor(M, check_finite=False)
            x = sla.lu_solve(lu, b, check_finite=False)
            bnorm = np.linalg.norm(b)
            res = np.linalg.norm(M @ x - b) / (bnorm if bnorm > 0 else 1.0)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise NumericalFailureError(f"LU factorization failed: {exc}") from exc
    if not np.isfinite(res):
        res = np.inf
    return x, float(res)


def solve_damped(G, g, lambda0=None):
    """Solve ``(G + lam I) d = g`` for the smallest rung ``lam`` that is positive definite.

    The ladder is ``0, lambda0, 2 lambda0, 4 lambda0, ...``; success means a
    Cholesky factorization exists and the step is finite.

    Parameters
    ----------
    G : ndarray, shape (n, n)
        Symmetric model Hessian.
    g : ndarray, shape (n,)
    lambda0 : float, optional
        First nonzero shift. Default ``1e-8 * sum(|diag G|) / n`` (floored
        at ``1e-12``).

    Returns
    -------
    d : ndarray
    lambda_used : float

    Raises
    ------
    NumericalFailureError
        If the shift would exceed ``1e8``.
    """
    g = check_vector(g, name="g")
    n = g.shape[0]
    G = check_square(G, name="G", n=n)
    if lambda0 is None:
        lambda0 = max(1e-8 * np.abs(np.diag(G)).sum() / n, 1e-12)
    if not lambda0 > 0:
        raise ValueError("lambda0 must be > 0")
    eye = np.eye(n)
    lam = 0.0
    while lam <= LAMBDA_MAX:
        try:
            c = sla.cho_factor(G + lam * eye, check_finite=False)
            d = sla.cho_solve(c, g, check_finite=False)
            if np.all(np.isfinite(d)):
                return d, lam
        except (np.linalg.LinAlgError, ValueError):
            pass
        lam = lambda0 if lam == 0.0 else 2.0 * lam
    raise NumericalFailureError(f"damping ladder exhausted (lambda > {LAMBDA_MAX:g})")


def sherman_morrison(B, u, v):
    """Inverse after a rank-one change: ``B - B u v^T B / (1 + v^T B u)``.

    ``B`` is the inverse of the unmodified matrix.
    """
    B = check_square(B, name="B")
    n = B.shape[0]
    u = check_vector(u, name="u", n=n)
    v = check_vector(v, name="v", n=n)
    Bu = B @ u
    vB = v @ B
    den = 1.0 + v @ Bu
    if abs(den) <= 1e-12:
        raise UpdateRejectedError(f"Sherman-Morrison denominator {den:.3e} too small")
    return B - np.outer(Bu, vB) / den


def sr1_inverse_update(B, p, q):
    """Rank-one inverse update ``B + (p - B q) p^T B / (p^T B q)``.

    The result satisfies the secant condition ``B_new q = p``.
    """
    B = check_square(B, name="B")
    n = B.shape[0]
    p = check_vector(p, name="p", n=n)
    q = check_vector(q, name="q", n=n)
    Bq = B @ q
    den = p @ Bq
    scale = np.linalg.norm(p) * np.linalg.norm(B) * np.linalg.norm(q)
    if not abs(den) > 1e-12 * scale or scale == 0.0:
        raise UpdateRejectedError("rank-one update denominator too small")
    return B + np.outer(p - Bq, p @ B) / den


def bfgs_inverse_update(B, p, q):
    """Standard BFGS inverse update with a relative curvature guard."""
    B = check_square(B, name="B")
    n = B.shape[0]
    p = check_vector(p, name="p", n=n)
    q = check_vector(q, name="q", n=n)
    qp = q @ p
    if not qp > 1e-12 * np.linalg.norm(p) * np.linalg.norm(q) or qp == 0.0:
        raise UpdateRejectedError(f"curvature condition failed (q.p = {qp:.3e})")
    rho = 1.0 / qp
    Bq = B @ q
    # expanded form of (I - rho p q^T) B (I - rho q p^T) + rho p p^T
    qBq = q @ Bq
    qB = q @ B
    out = (
        B
        - rho * (np.outer(p, qB) + np.outer(Bq, p))
        + (rho * rho * qBq + rho) * np.outer(p, p)
    )
    return out


def spectral_norm(M, iters=50, tol=1e-6, seed=0):
    """Estimate ``||M||_2`` by power iteration on ``M^T M``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.any(M):
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(M.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = M.T @ (M @ v)
        wn = np.linalg.norm(w)
        if wn == 0.0:
            return 0.0
        v = w / wn
        new = np.sqrt(wn)
        if abs(new - est) <= tol * new:
            est = new
            break
        est = new
    return float(np.linalg.norm(M @ v))
