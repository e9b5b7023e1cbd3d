"""Least-norm model update under 2n interpolation/orthogonality constraints.

For the window steps ``sigma_i`` and gaps ``d_i = x_k - x_i`` the update
``(dg, dG)`` minimizes ``1/2 ||dg||^2 + nu/2 ||dG||_F^2`` subject to::

    sigma_i^T dG sigma_i = rho_hat_i
    sigma_i^T dg - sigma_i^T dG d_i = eps_i          i = k-n+1, ..., k

Two couplings of the multiplier system are available. ``"printed"`` keeps
diagonal row-sum blocks in the first block column; ``"full"`` is the exact
stationarity system for a symmetric ``dG``, whose solution satisfies every
constraint.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import check_choice, check_vector, frozen
from .exceptions import DegenerateGeometryError, NumericalFailureError, ShapeError
from .linalg import gmres, lu_solve
from .state import gaps, steps

__all__ = [
    "ConstraintData",
    "KktSystem",
    "MultiplierSolution",
    "COUPLINGS",
    "compute_epsilon",
    "compute_rho_hat",
    "constraint_data",
    "assemble_kkt",
    "solve_multipliers",
    "apply_full_update",
    "full_update",
    "phi_objective",
    "check_geometry",
]

COUPLINGS = ("printed", "full")
DEGENERATE_RTOL = 1e-12
FALLBACK_RTOL = 1e-8


@dataclass(frozen=True)
class ConstraintData:
    eps: np.ndarray
    rho_hat: np.ndarray


@dataclass(frozen=True)
class KktSystem:
    """Block system ``[[H1, -2B], [-H2, 2D]] [eta; theta] = rhs``.

    Under ``coupling="printed"`` ``H1`` and ``H2`` are diagonal (row sums
    of ``A`` and ``B``). Under ``coupling="full"`` ``H1 = A`` and
    ``H2 = B^T`` are dense and ``D`` carries the symmetric cross term.
    """

    H1: np.ndarray
    H2: np.ndarray
    B: np.ndarray
    D: np.ndarray
    rhs: np.ndarray
    coupling: str = "printed"

    @property
    def n(self):
        return self.B.shape[0]

    @property
    def matrix(self):
        return np.block([[self.H1, -2.0 * self.B], [-self.H2, 2.0 * self.D]])

    def matvec(self, v):
        n = self.n
        eta, theta = v[:n], v[n:]
        return np.concatenate(
            [self.H1 @ eta - 2.0 * (self.B @ theta), -(self.H2 @ eta) + 2.0 * (self.D @ theta)]
        )


@dataclass(frozen=True)
class MultiplierSolution:
    eta: np.ndarray
    theta: np.ndarray
    residual: float = 0.0
    method: str = "gmres"


def check_geometry(state):
    """Raise :class:`DegenerateGeometryError` if some step is numerically zero.

    A step counts as degenerate when its norm is at most ``1e-12`` times the
    largest step norm in the window (or when every step is zero).
    """
    norms = np.linalg.norm(steps(state), axis=1)
    top = norms.max()
    bad = np.flatnonzero(norms <= DEGENERATE_RTOL * top) if top > 0 else np.arange(norms.size)
    if bad.size:
        j = int(bad[0]) + 1
        raise DegenerateGeometryError(f"window step {j} is degenerate", index=j)
    return norms


def compute_epsilon(state):
    """``eps_i = sigma_i^T G_prev (x_k - x_i) - sigma_i^T g_prev``.

    ``g_prev`` is the previous model gradient, anchored at ``x_{k-1}``.
    """
    S = steps(state)
    Dg = gaps(state)
    prev = state.prev_model
    return np.einsum("ij,ij->i", S @ prev.G, Dg) - S @ prev.g


def compute_rho_hat(state):
    """``rho_hat_i = 2 sigma_i^T (g_prev(x_{i-1}) - g_prev) - 2 df_i - sigma_i^T G_prev sigma_i``."""
    W = state.window
    S = steps(state)
    prev = state.prev_model
    # g_prev transported to x_{i-1}; G is symmetric so row form is fine
    g_lag = prev.g + (W[:-1] - W[-2]) @ prev.G
    df = np.diff(state.fvals)
    curv = np.einsum("ij,ij->i", S @ prev.G, S)
    return 2.0 * np.einsum("ij,ij->i", S, g_lag) - 2.0 * (S @ prev.g) - 2.0 * df - curv


def constraint_data(state):
    return ConstraintData(frozen(compute_epsilon(state)), frozen(compute_rho_hat(state)))


def assemble_kkt(state, eps, rho_hat, coupling="printed"):
    """Build the multiplier system for the current window.

    Parameters
    ----------
    state : ModelState
    eps, rho_hat : ndarray, shape (n,)
    coupling : {"printed", "full"}

    Returns
    -------
    KktSystem
    """
    check_choice(coupling, "coupling", COUPLINGS)
    n = state.n
    eps = check_vector(eps, name="eps", n=n)
    rho_hat = check_vector(rho_hat, name="rho_hat", n=n)
    check_geometry(state)
    nu = state.model.nu
    S = steps(state)
    Dg = gaps(state)
    SS = S @ S.T  # sigma_i . sigma_j
    SD = S @ Dg.T  # sigma_i . d_j
    DD = Dg @ Dg.T
    A = SS**2
    B = SS * SD  # (sigma_i.sigma_j)(d_j.sigma_i)
    if coupling == "printed":
        D = nu * SS + SS * DD
        H1 = np.diag(A.sum(axis=1))
        H2 = np.diag(B.sum(axis=1))
    else:
        D = nu * SS + 0.5 * (SS * DD + SD * SD.T)
        H1 = A
        H2 = B.T
    rhs = np.concatenate([2.0 * nu * rho_hat, 2.0 * nu * eps])
    return KktSystem(frozen(H1), frozen(H2), frozen(B), frozen(D), frozen(rhs), coupling)


def solve_multipliers(system, tol=1e-10, max_iter=200):
    """Solve the multiplier system by GMRES, falling back to dense LU.

    The fallback is used when GMRES stagnates, breaks down or runs out of
    iterations. Raises :class:`NumericalFailureError` when neither path
    reaches a relative residual of ``max(tol, 1e-8)``.
    """
    n = system.n
    res = gmres(system.matvec, system.rhs, tol=tol, restart=min(2 * n, 30), max_iter=max_iter)
    if res.converged:
        x, rel, method = res.x, res.residual, "gmres"
    else:
        x, rel = lu_solve(system.matrix, system.rhs)
        method = "lu"
        if not (np.all(np.isfinite(x)) and rel <= max(tol, FALLBACK_RTOL)):
            raise NumericalFailureError(
                f"multiplier solve failed (gmres {res.residual:.2e}, lu {rel:.2e})", residual=rel
            )
    return MultiplierSolution(frozen(x[:n]), frozen(x[n:]), float(rel), method)


def apply_full_update(state, mult, return_asymmetry=False):
    """Map multipliers to ``(dg, dG)``.

    ``dg = sum theta_i sigma_i`` and
    ``dG = sym(sum eta_i sigma_i sigma_i^T - 2 sum theta_i sigma_i d_i^T) / (2 nu)``
    where ``sym(M) = (M + M^T) / 2``.

    With ``return_asymmetry=True`` also returns ``||M - M^T||_F / 2`` of
    the unsymmetrized map (scaled like ``dG``).
    """
    n = state.n
    eta = check_vector(mult.eta, name="eta", n=n)
    theta = check_vector(mult.theta, name="theta", n=n)
    S = steps(state)
    Dg = gaps(state)
    dg = S.T @ theta
    M = (S.T * eta) @ S - 2.0 * (S.T * theta) @ Dg
    M = M / (2.0 * state.model.nu)
    dG = 0.5 * (M + M.T)
    if return_asymmetry:
        return dg, dG, float(0.5 * np.linalg.norm(M - M.T))
    return dg, dG


def full_update(state, coupling="full", tol=1e-10, max_iter=200):
    """Convenience pipeline: data, assembly, solve and map."""
    data = constraint_data(state)
    system = assemble_kkt(state, data.eps, data.rho_hat, coupling=coupling)
    mult = solve_multipliers(system, tol=tol, max_iter=max_iter)
    dg, dG = apply_full_update(state, mult)
    return dg, dG


def phi_objective(delta_g, delta_G, nu):
    """``1/2 ||dg||^2 + nu/2 ||dG||_F^2``."""
    if not nu > 0:
        raise ValueError("nu must be > 0")
    delta_g = np.asarray(delta_g, dtype=float)
    delta_G = np.asarray(delta_G, dtype=float)
    if delta_G.ndim != 2:
        raise ShapeError("delta_G must be a matrix")
    return 0.5 * float(delta_g @ delta_g) + 0.5 * nu * float(np.sum(delta_G * delta_G))
