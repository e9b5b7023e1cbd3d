"""Two-constraint relaxation with closed-form rank-one updates.

Only the newest step ``s = sigma_k`` is constrained::

    1/2 s^T dG s = rho_check = -df_k - 1/2 s^T G_prev s
        s^T dg   = eps_hat   = -s^T g_prev

The least-norm solution is ``dg = eps_hat s / ||s||^2`` and
``dG = 2 rho_check s s^T / ||s||^4``. The two blocks of the objective
decouple, so the minimizer does not depend on ``nu``.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateGeometryError
from .state import sigma

__all__ = [
    "SimplifiedRhs",
    "simplified_rhs",
    "simplified_multipliers",
    "simplified_update",
    "update_nu",
    "NU_MIN",
    "NU_MAX",
]

NU_MIN = 1e-6
NU_MAX = 1e6


@dataclass(frozen=True)
class SimplifiedRhs:
    rho_check: float
    eps_hat: float


def _newest_step(state):
    s = sigma(state, state.iter_index)
    ss = float(s @ s)
    tol = 1e-12 * max(1.0, float(np.linalg.norm(state.x_k)))
    if not np.sqrt(ss) > tol:
        raise DegenerateGeometryError("newest step is degenerate", index=state.n)
    return s, ss


def simplified_rhs(state):
    s, _ = _newest_step(state)
    prev = state.prev_model
    df = state.fvals[-1] - state.fvals[-2]
    return SimplifiedRhs(
        rho_check=float(-df - 0.5 * s @ prev.G @ s),
        eps_hat=float(-(s @ prev.g)),
    )


def simplified_multipliers(state):
    """Multipliers ``(eta_k, theta_k)`` of the relaxed problem.

    ``eta_k = -nu (4 df_k + 2 s^T G_prev s) / ||s||^4`` and
    ``theta_k = -s^T g_prev / ||s||^2``; with these, ``dg = theta_k s`` and
    ``dG = eta_k s s^T / (2 nu)``.
    """
    s, ss = _newest_step(state)
    prev = state.prev_model
    df = state.fvals[-1] - state.fvals[-2]
    nu = state.model.nu
    eta = -nu * (4.0 * df + 2.0 * (s @ prev.G @ s)) / ss**2
    theta = -(s @ prev.g) / ss
    return float(eta), float(theta)


def simplified_update(state):
    """Rank-one pair ``(dg, dG)`` satisfying the two relaxed constraints."""
    s, ss = _newest_step(state)
    rhs = simplified_rhs(state)
    dg = (rhs.eps_hat / ss) * s
    dG = (2.0 * rhs.rho_check / ss**2) * np.outer(s, s)
    return dg, dG


def update_nu(nu, delta_g, delta_G, clamp=True):
    """Multiplicative balance rule.

    Returns ``1.1 nu`` if ``||dg||^2 >= 1.1 ||dG||_F^2``, ``nu`` if
    ``0.9 ||dG||_F^2 <= ||dg||^2 < 1.1 ||dG||_F^2`` and ``0.9 nu``
    otherwise, clamped to ``[1e-6, 1e6]`` unless ``clamp`` is false.
    """
    if not nu > 0:
        raise ValueError("nu must be > 0")
    a = float(np.sum(np.square(delta_g)))
    b = float(np.sum(np.square(delta_G)))
    if a >= 1.1 * b:
        out = 1.1 * nu
    elif a >= 0.9 * b:
        out = nu
    else:
        out = 0.9 * nu
    if clamp:
        out = min(max(out, NU_MIN), NU_MAX)
    return out
