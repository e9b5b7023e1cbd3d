"""Iterative driver: model update, Newton or quasi-Newton step, stopping.

One iteration takes the model ``(g, G)`` anchored at the newest point
``x_k``, moves to ``x_{k+1} = x_k - d`` (``d = G^{-1} g`` or ``d = B g``),
slides the window and updates the model so that it explains the new step.

Safeguards added on top of the bare iteration are all switchable:

* ``safeguard="backtrack"`` halves the step while ``f`` increases;
* ``newton="damped"`` shifts an indefinite ``G`` until it is positive definite;
* ``refresh`` re-fits ``g`` on a fresh stencil around ``x_k`` when the model
  gradient vanishes (``"stall"``) or before every step (``"always"``).
  ``"off"`` stops as soon as the model gradient is small.
"""

import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ._validation import check_choice, check_int, check_point, check_scalar
from .diagnostics import ResidualRecord, constraint_residuals
from .exceptions import (
    ConfigError,
    DegenerateGeometryError,
    EvaluationError,
    InitializationError,
    NumericalFailureError,
    UpdateRejectedError,
)
from .full import apply_full_update, assemble_kkt, constraint_data, solve_multipliers
from .linalg import bfgs_inverse_update, lu_solve, solve_damped, sr1_inverse_update
from .simplified import simplified_update, update_nu
from .state import ModelState, QuadraticModel, push_point

__all__ = [
    "SolverConfig",
    "IterationRecord",
    "RunReport",
    "StepContext",
    "initialize",
    "simplex_gradient",
    "refresh",
    "step",
    "run",
    "fd_newton",
    "STATUSES",
]

STATUSES = ("converged", "max_iter", "degenerate_geometry", "numerical_failure")
MODEL_VARIANTS = ("full", "simplified")
STEP_VARIANTS = ("newton_direct", "sr1", "bfgs")
SAFEGUARDS = ("pure", "backtrack")
NEWTON_MODES = ("damped", "pure")
REFRESH_MODES = ("off", "stall", "always")
MAX_RESAMPLE = 10
PRESETS = {
    "default": {},
    "nonsmooth": dict(step_variant="bfgs", refresh="always", init_spread=1e-5),
}


@dataclass(frozen=True)
class SolverConfig:
    """Solver settings.

    Parameters
    ----------
    epsilon : float
        Stop when the model gradient norm drops below this value.
    max_iter : int
    model_variant : {"simplified", "full"}
    step_variant : {"newton_direct", "sr1", "bfgs"}
    safeguard : {"backtrack", "pure"}
    init_spread : float, optional
        Stencil radius; defaults to ``1e-2 * max(1, ||x0||)``.
    seed : int
    kkt_coupling : {"full", "printed"}
    newton : {"damped", "pure"}
        Shifted Cholesky solve or a plain LU solve of ``G d = g``.
    refresh : {"stall", "always", "off"}
    min_spread : float
        Lower bound for refresh radii, relative to ``max(1, ||x_k||)``.
    gmres_tol : float
    max_backtracks : int
    radius_growth : float
        Factor (>= 1) by which the refresh radius grows after each step
        whose line search failed; 1 disables growth.
    """

    epsilon: float = 1e-8
    max_iter: int = 2000
    model_variant: str = "simplified"
    step_variant: str = "newton_direct"
    safeguard: str = "backtrack"
    init_spread: float = None
    seed: int = 0
    kkt_coupling: str = "full"
    newton: str = "damped"
    refresh: str = "stall"
    min_spread: float = 1e-9
    gmres_tol: float = 1e-10
    max_backtracks: int = 30
    radius_growth: float = 1.0

    def __post_init__(self):
        check_scalar(self.epsilon, "epsilon", positive=True)
        check_int(self.max_iter, "max_iter", minimum=1)
        check_choice(self.model_variant, "model_variant", MODEL_VARIANTS)
        check_choice(self.step_variant, "step_variant", STEP_VARIANTS)
        check_choice(self.safeguard, "safeguard", SAFEGUARDS)
        check_choice(self.kkt_coupling, "kkt_coupling", ("printed", "full"))
        check_choice(self.newton, "newton", NEWTON_MODES)
        check_choice(self.refresh, "refresh", REFRESH_MODES)
        if self.init_spread is not None:
            check_scalar(self.init_spread, "init_spread", positive=True)
        check_int(self.seed, "seed", minimum=0)
        check_scalar(self.min_spread, "min_spread", positive=True)
        check_scalar(self.gmres_tol, "gmres_tol", positive=True)
        check_int(self.max_backtracks, "max_backtracks", minimum=0)
        if check_scalar(self.radius_growth, "radius_growth") < 1.0:
            raise ConfigError("radius_growth must be >= 1")

    @classmethod
    def preset(cls, name, **overrides):
        """Named settings: ``"default"`` or ``"nonsmooth"``.

        The nonsmooth preset takes BFGS steps, re-fits the gradient on a
        small stencil before every step and keeps the simplified model and
        backtracking.
        """
        try:
            base = dict(PRESETS[name])
        except KeyError:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
        base.update(overrides)
        return cls(**base)

    def spread_for(self, x0):
        if self.init_spread is not None:
            return float(self.init_spread)
        return 1e-2 * max(1.0, float(np.linalg.norm(x0)))

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class IterationRecord:
    k: int
    f: float
    grad_norm: float
    step_norm: float
    nu: float
    e1_inf: float
    e2_inf: float
    lambda_used: float = 0.0
    backtracks: int = 0
    accepted: bool = True
    refreshed: bool = False
    resampled: bool = False
    hessian_reset: bool = False
    f_best: float = float("nan")
    residuals: ResidualRecord = field(default=None, repr=False, compare=False)


@dataclass
class RunReport:
    """Trace and outcome of :func:`run`."""

    iterations: list
    status: str
    x_star: np.ndarray
    f_star: float
    wall_time: float
    n_fev: int = 0
    message: str = ""
    x_last: np.ndarray = None
    grad_last: np.ndarray = None

    @property
    def n_iter(self):
        return len(self.iterations)

    @property
    def grad_norm_final(self):
        if self.grad_last is not None:
            return float(np.linalg.norm(self.grad_last))
        return self.iterations[-1].grad_norm if self.iterations else float("nan")

    @property
    def e1_inf_final(self):
        return self.iterations[-1].e1_inf if self.iterations else float("nan")

    @property
    def e2_inf_final(self):
        return self.iterations[-1].e2_inf if self.iterations else float("nan")

    def trace(self, name):
        """Array of one :class:`IterationRecord` field over the run."""
        return np.array([getattr(rec, name) for rec in self.iterations])


class StepContext:
    """Mutable per-run bookkeeping shared by :func:`step` calls.

    Holds the random generator, the quasi-Newton matrix, the best point
    seen so far and the evaluation counter.
    """

    def __init__(self, problem, cfg, x0=None):
        self.problem = problem
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.spread = cfg.spread_for(np.zeros(1) if x0 is None else x0)
        self.last_step = self.spread
        self.boost = 1.0
        self.B = None
        self.x_prev = None
        self.g_prev = None
        self.x_best = None
        self.f_best = np.inf
        self.n_fev = 0

    def evaluate(self, x):
        self.n_fev += 1
        return self.problem(x)

    def offer(self, x, f):
        if f < self.f_best:
            self.f_best = float(f)
            self.x_best = np.array(x, dtype=float, copy=True)

    def radius(self, x):
        lo = self.cfg.min_spread * max(1.0, float(np.linalg.norm(x)))
        return float(min(self.spread, max(self.boost * self.last_step, lo)))

    def unit(self, n):
        u = self.rng.standard_normal(n)
        return u / np.linalg.norm(u)

    def directions(self, n):
        Q = np.linalg.qr(self.rng.standard_normal((n, n)))[0]
        return Q.T


def simplex_gradient(window, fvals):
    """Minimum-norm solution of ``sigma_i^T g = df_i`` over consecutive window steps."""
    S = np.diff(np.asarray(window, dtype=float), axis=0)
    df = np.diff(np.asarray(fvals, dtype=float))
    return np.linalg.lstsq(S, df, rcond=None)[0]


def _stencil(ctx, x, fx, h):
    """Points ``x + h u_i`` (orthonormal ``u_i``) followed by ``x`` itself."""
    n = x.shape[0]
    U = ctx.directions(n)
    pts, vals = [], []
    for u in U:
        for _ in range(MAX_RESAMPLE):
            p = x + h * u
            fp = ctx.evaluate(p)
            if np.isfinite(fp):
                break
            u = ctx.unit(n)
        else:
            raise InitializationError(f"objective not finite near {x} at radius {h:g}")
        pts.append(p)
        vals.append(fp)
    pts.append(x)
    vals.append(fx)
    return np.array(pts), np.array(vals)


def initialize(problem, x0, cfg, ctx=None):
    """Initial window and model: stencil around ``x0``, ``G = I``, fitted ``g``, ``nu = 1``.

    Raises
    ------
    InitializationError
        If ``f(x0)`` is not finite or a stencil point keeps failing.
    """
    x0 = check_point(x0, n=problem.dim, name="x0")
    ctx = StepContext(problem, cfg, x0) if ctx is None else ctx
    f0 = ctx.evaluate(x0)
    if not np.isfinite(f0):
        raise InitializationError(f"objective is not finite at x0 ({f0})")
    window, fvals = _stencil(ctx, x0, f0, ctx.spread)
    g = simplex_gradient(window, fvals)
    model = QuadraticModel.identity(g)
    ctx.offer(x0, f0)
    return ModelState(window, fvals, model, model, iter_index=0)


def _central_gradient(ctx, x, window, fvals, h):
    """Centered differences along the stencil directions, using mirrored points."""
    U = (window[:-1] - x) / h
    back = np.array([ctx.evaluate(x - h * u) for u in U])
    if not np.all(np.isfinite(back)):
        return simplex_gradient(window, fvals)
    return np.linalg.lstsq(U, (fvals[:-1] - back) / (2.0 * h), rcond=None)[0]


def refresh(state, ctx, reset_hessian=False, central=False):
    """Re-seed the window around ``x_k`` and re-fit the model gradient.

    With ``central=True`` a second-order gradient from mirrored stencil
    points is computed as well and returned as the second element.
    """
    x, fx = state.x_k.copy(), state.f_k
    h = ctx.radius(x)
    window, fvals = _stencil(ctx, x, fx, h)
    g = simplex_gradient(window, fvals)
    G = np.eye(state.n) if reset_hessian else state.model.G
    model = QuadraticModel(g, G, state.model.nu)
    new = ModelState(window, fvals, model, model, state.iter_index)
    if central:
        return new, _central_gradient(ctx, x, window, fvals, h)
    return new


def _direction(state, cfg, ctx):
    g, G = state.model.g, state.model.G
    if cfg.step_variant == "newton_direct":
        if cfg.newton == "damped":
            return solve_damped(G, g)
        d, rel = lu_solve(G, g)
        if not (np.all(np.isfinite(d)) and rel <= 1e-8):
            raise NumericalFailureError("plain Newton solve failed", residual=rel)
        return d, 0.0
    n = state.n
    if ctx.B is None:
        # warm-up: steepest descent
        ctx.B = np.eye(n)
    elif ctx.x_prev is not None:
        p = state.x_k - ctx.x_prev
        q = g - ctx.g_prev
        update = sr1_inverse_update if cfg.step_variant == "sr1" else bfgs_inverse_update
        try:
            ctx.B = update(ctx.B, p, q)
        except UpdateRejectedError:
            pass
    return ctx.B @ g, 0.0


def _model_update(state, cfg):
    if cfg.model_variant == "simplified":
        return simplified_update(state)
    data = constraint_data(state)
    system = assemble_kkt(state, data.eps, data.rho_hat, coupling=cfg.kkt_coupling)
    mult = solve_multipliers(system, tol=cfg.gmres_tol)
    return apply_full_update(state, mult)


def _degenerate(s, x):
    return not np.linalg.norm(s) > 1e-12 * max(1.0, float(np.linalg.norm(x)))


def step(state, problem, cfg, ctx=None):
    """Advance one iteration.

    Returns
    -------
    state : ModelState
        Window with the new point and the updated model.
    record : IterationRecord
    """
    if ctx is None:
        ctx = StepContext(problem, cfg, state.x_k)
        ctx.offer(state.x_k, state.f_k)
    n = state.n
    xk, fk = state.x_k, state.f_k
    g = state.model.g
    hessian_reset = False
    try:
        d, lam = _direction(state, cfg, ctx)
    except NumericalFailureError:
        if not (cfg.step_variant == "newton_direct" and cfg.newton == "damped"):
            raise
        # G too indefinite for the damping ladder: restart curvature from I
        state = state.with_model(QuadraticModel.identity(g, state.model.nu))
        d, lam = g.copy(), 0.0
        hessian_reset = True

    t, backtracks = 1.0, 0
    trial = problem.project(xk - d)
    ft = ctx.evaluate(trial)
    accepted = True
    if cfg.safeguard == "backtrack":
        while not ft <= fk:
            if backtracks >= cfg.max_backtracks:
                accepted = False
                break
            t *= 0.5
            backtracks += 1
            trial = problem.project(xk - t * d)
            ft = ctx.evaluate(trial)

    resampled = False
    if _degenerate(trial - xk, xk):
        h = ctx.radius(xk)
        for _ in range(MAX_RESAMPLE):
            u = ctx.unit(n)
            for cand in (xk + h * u, xk - h * u):
                cand = problem.project(cand)
                if not _degenerate(cand - xk, xk):
                    break
            else:
                continue
            fc = ctx.evaluate(cand)
            if np.isfinite(fc):
                trial, ft, resampled = cand, fc, True
                accepted = ft <= fk
                break
        else:
            raise DegenerateGeometryError("could not resample a nondegenerate step")
    if not np.isfinite(ft):
        raise NumericalFailureError(f"objective not finite at trial point (f = {ft})")

    new = push_point(state, trial, ft)
    for _ in range(MAX_RESAMPLE):
        try:
            dg, dG = _model_update(new, cfg)
            break
        except DegenerateGeometryError as exc:
            j = exc.index
            if j is None or j >= n:
                raise
            # replace the older endpoint of the collapsed step
            W = np.array(new.window)
            F = np.array(new.fvals)
            W[j - 1] = new.x_k + ctx.radius(new.x_k) * ctx.unit(n)
            F[j - 1] = ctx.evaluate(W[j - 1])
            if not np.isfinite(F[j - 1]):
                continue
            new = replace(new, window=W, fvals=F)
            resampled = True
    else:
        raise DegenerateGeometryError("window stayed degenerate after resampling")

    prev = new.prev_model
    nu = update_nu(prev.nu, dg, dG)
    model = QuadraticModel(prev.g + dg, prev.G + dG, nu)
    res = constraint_residuals(new, dg, dG) if n > 1 else ResidualRecord.from_vectors([], [])
    new = new.with_model(model)

    step_norm = float(np.linalg.norm(trial - xk))
    ctx.x_prev, ctx.g_prev = xk.copy(), g.copy()
    ctx.last_step = step_norm
    # widen the next stencil after a failed line search, reset on success
    ctx.boost = 1.0 if accepted else ctx.boost * cfg.radius_growth
    ctx.offer(trial, ft)
    rec = IterationRecord(
        k=new.iter_index, f=float(ft), grad_norm=float(np.linalg.norm(model.g)),
        step_norm=step_norm, nu=nu, e1_inf=res.e1_inf, e2_inf=res.e2_inf,
        lambda_used=float(lam), backtracks=backtracks, accepted=bool(accepted),
        resampled=resampled, hessian_reset=hessian_reset, f_best=ctx.f_best, residuals=res,
    )
    return new, rec


def run(problem, x0, cfg=None):
    """Iterate until the model gradient is small or ``max_iter`` steps are taken.

    ``x_star`` in the report is the best point evaluated along the iterate
    sequence (stencil points excluded).
    """
    cfg = SolverConfig() if cfg is None else cfg
    t0 = time.perf_counter()
    x0 = problem.project(check_point(x0, n=problem.dim, name="x0"))
    ctx = StepContext(problem, cfg, x0)
    state = initialize(problem, x0, cfg, ctx)
    records = []
    status, message = "max_iter", ""
    try:
        for _ in range(cfg.max_iter):
            refreshed = False
            if np.linalg.norm(state.model.g) < cfg.epsilon:
                if cfg.refresh == "off":
                    status = "converged"
                    break
                reset = cfg.step_variant == "newton_direct"
                fresh, g_check = refresh(state, ctx, reset_hessian=reset, central=True)
                if np.linalg.norm(g_check) < cfg.epsilon:
                    state = state.with_model(replace(state.model, g=g_check))
                    status = "converged"
                    break
                # near a minimizer the forward fit is biased by O(h); keep the smaller estimate
                if np.linalg.norm(g_check) < np.linalg.norm(fresh.model.g):
                    model = replace(fresh.model, g=g_check)
                    fresh = replace(fresh, model=model, prev_model=model)
                state, refreshed = fresh, True
            elif cfg.refresh == "always":
                state = refresh(state, ctx)
                refreshed = True
            state, rec = step(state, problem, cfg, ctx)
            if refreshed:
                rec = replace(rec, refreshed=True)
            records.append(rec)
    except DegenerateGeometryError as exc:
        status, message = "degenerate_geometry", str(exc)
    except (NumericalFailureError, EvaluationError, InitializationError) as exc:
        status, message = "numerical_failure", str(exc)
    return RunReport(
        iterations=records, status=status, x_star=ctx.x_best.copy(), f_star=ctx.f_best,
        wall_time=time.perf_counter() - t0, n_fev=ctx.n_fev, message=message,
        x_last=state.x_k.copy(), grad_last=state.model.g.copy(),
    )


# --- baseline ----------------------------------------------------------------


def _fd_gradient(fun, x, rel=1e-6):
    h = rel * np.maximum(1.0, np.abs(x))
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h[i])
    return g


def _fd_hessian(fun, x, rel=1e-4):
    n = x.size
    h = rel * np.maximum(1.0, np.abs(x))
    H = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h[j]
        H[:, j] = (_fd_gradient(fun, x + e) - _fd_gradient(fun, x - e)) / (2 * h[j])
    return 0.5 * (H + H.T)


def fd_newton(problem, x0, cfg=None):
    """Finite-difference Newton baseline with a damped solve and backtracking.

    Gradients use central differences with step ``1e-6 * max(1, |x_i|)``;
    Hessians difference those gradients with step ``1e-4 * max(1, |x_i|)``.
    """
    cfg = SolverConfig() if cfg is None else cfg
    t0 = time.perf_counter()
    count = [0]

    def fun(x):
        count[0] += 1
        return problem(problem.project(x)) if problem.bounds is not None else problem(x)

    x = check_point(x0, n=problem.dim, name="x0")
    fx = fun(x)
    records = []
    status, message = "max_iter", ""
    xb, fb = x.copy(), fx
    try:
        for k in range(1, cfg.max_iter + 1):
            g = _fd_gradient(fun, x)
            if np.linalg.norm(g) < cfg.epsilon:
                status = "converged"
                break
            d, lam = solve_damped(_fd_hessian(fun, x), g)
            t, bt = 1.0, 0
            xn = problem.project(x - d)
            fn = fun(xn)
            while not fn <= fx and bt < cfg.max_backtracks:
                t *= 0.5
                bt += 1
                xn = problem.project(x - t * d)
                fn = fun(xn)
            accepted = bool(fn <= fx)
            if not np.isfinite(fn):
                raise NumericalFailureError("objective not finite")
            sn = float(np.linalg.norm(xn - x))
            if accepted:
                x, fx = xn, fn
            if fx < fb:
                xb, fb = x.copy(), fx
            records.append(IterationRecord(
                k=k, f=float(fn), grad_norm=float(np.linalg.norm(g)), step_norm=sn, nu=1.0,
                e1_inf=float("nan"), e2_inf=float("nan"), lambda_used=float(lam),
                backtracks=bt, accepted=accepted, f_best=fb,
            ))
            if not accepted:
                status, message = "max_iter", "line search failed"
                break
    except NumericalFailureError as exc:
        status, message = "numerical_failure", str(exc)
    return RunReport(
        iterations=records, status=status, x_star=xb, f_star=float(fb),
        wall_time=time.perf_counter() - t0, n_fev=count[0], message=message,
        x_last=x.copy(), grad_last=_fd_gradient(fun, x),
    )
