"""Residuals of the dropped constraints, their decay, and the
approximation-order probe."""

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_vector
from .exceptions import ConfigError, DegenerateGeometryError
from .full import compute_epsilon, compute_rho_hat
from .linalg import spectral_norm
from .state import gaps, steps

__all__ = [
    "ResidualRecord",
    "DecayReport",
    "ProbeResult",
    "constraint_residuals",
    "simplified_residuals_expanded",
    "residual_decay_check",
    "interpolation_model",
    "approximation_scaling_probe",
]


@dataclass(frozen=True)
class ResidualRecord:
    """Residuals ``E1_i``, ``E2_i`` for ``i = k-n+1, ..., k-1``.

    ``sigma_norms`` holds ``||sigma_i||`` over the same range.
    """

    e1: np.ndarray
    e2: np.ndarray
    e1_inf: float
    e2_inf: float
    sigma_norms: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def from_vectors(cls, e1, e2, sigma_norms=None):
        e1 = np.asarray(e1, dtype=float)
        e2 = np.asarray(e2, dtype=float)
        sn = np.zeros(e1.shape) if sigma_norms is None else np.asarray(sigma_norms, float)
        return cls(
            e1, e2, float(np.max(np.abs(e1), initial=0.0)),
            float(np.max(np.abs(e2), initial=0.0)), sn,
        )


def constraint_residuals(state, delta_g, delta_G):
    """Definitional residuals of the constraints below the newest step.

    ``E1_i = sigma_i^T dG sigma_i - rho_hat_i`` and
    ``E2_i = sigma_i^T dg - sigma_i^T dG (x_k - x_i) - eps_i``.
    ``state`` must already contain the newest point (after the push) and
    the previous model used to build the update.
    """
    n = state.n
    dg = check_vector(delta_g, name="delta_g", n=n)
    dG = np.asarray(delta_G, dtype=float)
    S = steps(state)[:-1]
    Dg = gaps(state)[:-1]
    eps = compute_epsilon(state)[:-1]
    rho = compute_rho_hat(state)[:-1]
    e1 = np.einsum("ij,jk,ik->i", S, dG, S) - rho
    e2 = S @ dg - np.einsum("ij,jk,ik->i", S, dG, Dg) - eps
    return ResidualRecord.from_vectors(e1, e2, np.linalg.norm(S, axis=1))


def simplified_residuals_expanded(state):
    """Closed-form residuals of the rank-one update, written in step inner products.

    Independent of :func:`constraint_residuals`; both must agree when the
    update is the simplified one.
    """
    W = state.window
    S = steps(state)
    s = S[-1]
    Si = S[:-1]
    G = state.prev_model.G
    g = state.prev_model.g
    ss = s @ s
    df = np.diff(state.fvals)
    c = 2.0 * df[-1] + s @ G @ s
    si_s = Si @ s
    lag = W[:-2] - W[-2]  # x_{i-1} - x_{k-1}
    d = W[-1] - W[1:-1]  # x_k - x_i
    e1 = (
        -c * si_s**2 / ss**2
        - 2.0 * np.einsum("ij,jk,ik->i", Si, G, lag)
        + 2.0 * df[:-1]
        + np.einsum("ij,jk,ik->i", Si, G, Si)
    )
    e2 = (
        Si @ g
        - si_s * (s @ g) / ss
        - np.einsum("ij,jk,ik->i", Si, G, d)
        + c * si_s * (d @ s) / ss**2
    )
    return ResidualRecord.from_vectors(e1, e2, np.linalg.norm(Si, axis=1))


@dataclass(frozen=True)
class DecayReport:
    """Per-iteration ratios ``max_i |E_i| / ||sigma_i||`` and a boundedness verdict."""

    ratio1: np.ndarray
    ratio2: np.ndarray
    median1: float
    median2: float
    bounded: bool
    factor: float

    @property
    def max1(self):
        return float(np.max(self.ratio1, initial=0.0))

    @property
    def max2(self):
        return float(np.max(self.ratio2, initial=0.0))


def _ratio(e, sn):
    e = np.abs(np.asarray(e, dtype=float))
    if e.size == 0:
        return 0.0
    sn = np.asarray(sn, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(sn > 0, e / np.where(sn > 0, sn, 1.0), np.where(e > 0, np.inf, 0.0))
    return float(np.max(r))


def residual_decay_check(trace, sigma_norms=None, factor=10.0):
    """Check that ``|E_i| / ||sigma_i||`` stays within ``factor`` times its median.

    Parameters
    ----------
    trace : sequence of ResidualRecord
    sigma_norms : sequence of array_like, optional
        Step norms per record; taken from the records when omitted.
    factor : float
        Allowed excursion above the median.
    """
    trace = list(trace)
    if len(trace) < 2:
        raise ConfigError("trace must contain at least two records")
    if sigma_norms is None:
        sigma_norms = [rec.sigma_norms for rec in trace]
    if len(sigma_norms) != len(trace):
        raise ConfigError("sigma_norms must align with trace")
    r1 = np.array([_ratio(rec.e1, sn) for rec, sn in zip(trace, sigma_norms)])
    r2 = np.array([_ratio(rec.e2, sn) for rec, sn in zip(trace, sigma_norms)])
    m1 = float(np.median(r1))
    m2 = float(np.median(r2))
    bounded = bool(
        np.all(np.isfinite(r1))
        and np.all(np.isfinite(r2))
        and np.max(r1) <= factor * m1 + 0.0
        and np.max(r2) <= factor * m2 + 0.0
    )
    return DecayReport(r1, r2, m1, m2, bounded, float(factor))


# --- approximation-order probe -------------------------------------------


@dataclass(frozen=True)
class ProbeResult:
    radii: np.ndarray
    grad_errors: np.ndarray
    hess_errors: np.ndarray
    grad_slope: float
    hess_slope: float
    floor_detected: bool
    used_grad: np.ndarray
    used_hess: np.ndarray

    def __iter__(self):
        yield self.grad_slope
        yield self.hess_slope


def _quad_basis(n):
    iu = np.triu_indices(n)
    # Frobenius weight of each upper-triangular coordinate
    w = np.where(iu[0] == iu[1], 1.0, 2.0)
    return iu, w


def interpolation_model(fun, center, offsets, g0=None, G0=None, nu=1.0):
    """Least-norm update of ``(g0, G0)`` interpolating ``fun`` at ``center + offsets``.

    Minimizes ``1/2 ||dg||^2 + nu/2 ||dG||_F^2`` over symmetric ``dG``
    subject to ``Q(center + v) - Q(center) = f(center + v) - f(center)``
    for every row ``v`` of ``offsets``.

    Returns
    -------
    g, G : ndarray
    """
    center = check_vector(center, name="center")
    n = center.shape[0]
    V = np.atleast_2d(np.asarray(offsets, dtype=float))
    g0 = np.zeros(n) if g0 is None else check_vector(g0, n=n)
    G0 = np.eye(n) if G0 is None else np.asarray(G0, dtype=float)
    f0 = fun(center)
    fv = np.array([fun(center + v) for v in V])
    r = fv - f0 - V @ g0 - 0.5 * np.einsum("ij,jk,ik->i", V, G0, V)
    iu, w = _quad_basis(n)
    quad = 0.5 * V[:, iu[0]] * V[:, iu[1]] * np.where(iu[0] == iu[1], 1.0, 2.0)
    M = np.hstack([V, quad])
    # variable scaling turns the weighted least-norm problem into a plain one
    scale = np.concatenate([np.ones(n), 1.0 / np.sqrt(nu * w)])
    y = np.linalg.lstsq(M * scale, r, rcond=None)[0]
    z = y * scale
    dG = np.zeros((n, n))
    dG[iu] = z[n:]
    dG = dG + np.triu(dG, 1).T
    return g0 + z[:n], G0 + dG


def _sample_design(n, rng, tries=10, cond_max=1e8):
    p = n * (n + 3) // 2
    iu, _ = _quad_basis(n)
    for _ in range(tries):
        dirs = rng.standard_normal((p, n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        V = dirs * rng.uniform(0.5, 1.0, size=(p, 1))
        M = np.hstack([V, 0.5 * V[:, iu[0]] * V[:, iu[1]]])
        if np.linalg.cond(M) < cond_max:
            return V
    raise DegenerateGeometryError("could not draw a poised sample set")


MIN_RADII = 5


def approximation_scaling_probe(problem, center, radii, cfg=None, seed=None, nu=1.0):
    """Fit the decay orders of model gradient and Hessian errors.

    For each radius ``delta`` the same frozen sample pattern (drawn once in
    the unit ball) is scaled into ``B(center, delta)``; the model is built
    by :func:`interpolation_model` from ``g = 0, G = I``. Errors are
    ``||g - grad f||_2`` and the spectral norm of ``G - hess f``; slopes
    come from a least-squares fit of log error against log radius, using
    only radii whose error sits above the rounding floor.

    Returns
    -------
    ProbeResult
        Unpacks as ``(grad_slope, hess_slope)``.
    """
    if problem.analytic_grad is None or problem.analytic_hess is None:
        raise ConfigError(f"problem {problem.name!r} lacks analytic derivatives")
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or radii.size < MIN_RADII:
        raise ConfigError(f"need at least {MIN_RADII} radii")
    if np.any(radii <= 0) or np.any(np.diff(radii) >= 0):
        raise ConfigError("radii must be positive and strictly decreasing")
    center = check_vector(center, name="center", n=problem.dim)
    if seed is None:
        seed = 0 if cfg is None else cfg.seed
    rng = np.random.default_rng(seed)
    V = _sample_design(problem.dim, rng)
    gt = np.asarray(problem.analytic_grad(center), dtype=float)
    Ht = np.asarray(problem.analytic_hess(center), dtype=float)
    fscale = max(1.0, abs(float(problem(center))))
    ge, he, gf, hf = [], [], [], []
    for delta in radii:
        g, G = interpolation_model(problem, center, delta * V, nu=nu)
        ge.append(float(np.linalg.norm(g - gt)))
        he.append(spectral_norm(G - Ht))
        gf.append(1e3 * np.finfo(float).eps * fscale / delta)
        hf.append(1e3 * np.finfo(float).eps * fscale / delta**2)
    ge, he = np.array(ge), np.array(he)
    use_g = ge > np.array(gf)
    use_h = he > np.array(hf)

    def slope(err, use):
        if use.sum() < 2:
            return float("nan")
        return float(np.polyfit(np.log(radii[use]), np.log(err[use]), 1)[0])

    gs, hs = slope(ge, use_g), slope(he, use_h)
    return ProbeResult(
        radii, ge, he, gs, hs, bool(np.isnan(gs) or np.isnan(hs)), use_g, use_h
    )
