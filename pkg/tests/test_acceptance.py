"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line; the lines are repeated in
the terminal summary. Run directly with ``python tests/test_acceptance.py``
for the lines alone.
"""

import time

import numpy as np
import pytest
import scipy.linalg as sla

from conftest import eq_qp_update, full_constraints, random_state
from qmnewt.cli import main as cli_main
from qmnewt.diagnostics import approximation_scaling_probe, residual_decay_check
from qmnewt.full import constraint_data, full_update, phi_objective
from qmnewt.problems import (
    cardinality_relaxed,
    chained_rosenbrock,
    crescent,
    expsin,
    hilbert_max,
    initial_guess,
    woods,
)
from qmnewt.simplified import simplified_rhs, simplified_update
from qmnewt.solver import SolverConfig, run

RESULTS = []


def report(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_simplified_constraint_exactness():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        s = random_state(rng, int(rng.integers(2, 9)))
        dg, dG = simplified_update(s)
        rhs = simplified_rhs(s)
        sk = s.window[-1] - s.window[-2]
        r1 = abs(0.5 * sk @ dG @ sk - rhs.rho_check) / max(abs(rhs.rho_check), 1e-300)
        r2 = abs(sk @ dg - rhs.eps_hat) / max(abs(rhs.eps_hat), 1e-300)
        worst = max(worst, r1, r2)
    dt = time.perf_counter() - t0
    report("simplified-constraint-exactness", worst <= 1e-10 and dt < 5.0,
           f"worst relative residual {worst:.2e} (<= 1e-10), {dt:.2f}s (< 5s)")


def test_full_constraint_satisfaction():
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        s = random_state(rng, int(rng.integers(2, 7)))
        d = constraint_data(s)
        dg, dG = full_update(s, tol=1e-10)
        res = [a @ dg + np.sum(A * dG) - b for a, A, b in full_constraints(s, d.eps, d.rho_hat)]
        worst = max(worst, np.max(np.abs(res)) / np.linalg.norm(np.r_[d.rho_hat, d.eps]))
    dt = time.perf_counter() - t0
    report("full-constraint-satisfaction", worst <= 1e-7 and dt < 30.0,
           f"worst residual / ||rhs|| {worst:.2e} (<= 1e-7), {dt:.2f}s (< 30s)")


def test_qp_oracle_equivalence():
    rng = np.random.default_rng(303)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        s = random_state(rng, int(rng.integers(1, 6)))
        sk = s.window[-1] - s.window[-2]
        rhs = simplified_rhs(s)
        n = s.n
        cons = [(np.zeros(n), np.outer(sk, sk), 2 * rhs.rho_check), (sk, np.zeros((n, n)), rhs.eps_hat)]
        ref_g, ref_G = eq_qp_update(n, s.model.nu, cons)
        dg, dG = simplified_update(s)
        worst = max(worst, np.max(np.abs(dg - ref_g)), np.max(np.abs(dG - ref_G)))
    dt = time.perf_counter() - t0
    report("qp-oracle-equivalence", worst <= 1e-8 and dt < 10.0,
           f"max deviation {worst:.2e} (<= 1e-8), {dt:.2f}s (< 10s)")


def _feasible_pair(rng, s):
    """Two distinct feasible updates for the full constraint set."""
    n = s.n
    d = constraint_data(s)
    iu = np.triu_indices(n)
    cons = full_constraints(s, d.eps, d.rho_hat)
    rows, rhs = [], []
    for a, A, b in cons:
        S = 0.5 * (A + A.T)
        rows.append(np.concatenate([a, np.where(iu[0] == iu[1], S[iu], 2 * S[iu])]))
        rhs.append(b)
    C = np.array(rows)
    z0 = np.linalg.lstsq(C, np.array(rhs), rcond=None)[0]
    N = sla.null_space(C)

    def unpack(z):
        G = np.zeros((n, n))
        G[iu] = z[n:]
        return z[:n], G + np.triu(G, 1).T

    za = z0 + N @ rng.standard_normal(N.shape[1])
    zb = z0 + N @ rng.standard_normal(N.shape[1])
    return unpack(za), unpack(zb), C, np.array(rhs)


def test_strict_convexity():
    rng = np.random.default_rng(404)
    violations, min_margin = 0, np.inf
    for _ in range(100):
        s = random_state(rng, int(rng.integers(2, 5)))
        (ga, Ga), (gb, Gb), _, _ = _feasible_pair(rng, s)
        nu = s.model.nu
        mid = phi_objective(0.5 * (ga + gb), 0.5 * (Ga + Gb), nu)
        avg = 0.5 * (phi_objective(ga, Ga, nu) + phi_objective(gb, Gb, nu))
        margin = avg - mid
        min_margin = min(min_margin, margin)
        if not margin > 0:
            violations += 1
    report("strict-convexity", violations == 0 and min_margin > 0,
           f"{violations} violations in 100 pairs, smallest margin {min_margin:.2e}")


def test_convergence_regression():
    ros = chained_rosenbrock(2)
    r1 = run(ros, initial_guess("IG1", 2), SolverConfig(max_iter=500))
    g_inf = float(np.max(np.abs(ros.analytic_grad(r1.x_star))))
    wd = woods()
    r2 = run(wd, initial_guess("IG1", 4), SolverConfig(max_iter=2000))
    f_err = abs(r2.f_star - 0.0)
    ok = g_inf <= 1e-6 and r1.n_iter <= 500 and f_err <= 1e-6 and r2.n_iter <= 2000
    report("convergence-regression", ok,
           f"rosenbrock |grad|_inf {g_inf:.2e} in {r1.n_iter} it (<= 1e-6, 500); "
           f"woods |f| {f_err:.2e} in {r2.n_iter} it (<= 1e-6, 2000)")


def test_residual_decay():
    # the IG1 run stops before iteration 400, so the longest IG3 run is used
    rep = run(chained_rosenbrock(2), initial_guess("IG3", 2), SolverConfig(max_iter=500))
    it = rep.iterations
    if len(it) < 400:
        report("residual-decay", False, f"run stopped at iteration {len(it)} before 400")
    a, b = it[49], it[399]
    d1 = b.e1_inf <= 1e-2 * a.e1_inf
    d2 = b.e2_inf <= 1e-2 * a.e2_inf
    dec = residual_decay_check([r.residuals for r in it[49:400]], factor=10.0)
    ok = d1 and d2 and dec.bounded
    report("residual-decay", ok,
           f"E1 {a.e1_inf:.1e}->{b.e1_inf:.1e}, E2 {a.e2_inf:.1e}->{b.e2_inf:.1e} (<= 1e-2x); "
           f"max/median ratio {dec.max1 / dec.median1:.1e}, {dec.max2 / dec.median2:.1e} (<= 10)")


def test_approximation_order():
    t0 = time.perf_counter()
    gs, hs = approximation_scaling_probe(expsin(), np.zeros(2), [1e-1, 3e-2, 1e-2, 3e-3, 1e-3])
    dt = time.perf_counter() - t0
    ok = 1.7 <= gs <= 2.3 and 0.7 <= hs <= 1.3 and gs > hs and dt < 10.0
    report("approximation-order", ok,
           f"grad slope {gs:.3f} in [1.7, 2.3], hess slope {hs:.3f} in [0.7, 1.3], {dt:.2f}s")


def test_nonsmooth_convergence():
    r3 = run(crescent(), np.ones(2), SolverConfig.preset("nonsmooth", max_iter=2000))
    r1 = run(hilbert_max(50), initial_guess("IG1", 50), SolverConfig.preset("nonsmooth", max_iter=2000))
    ok = r3.f_star <= 1e-4 and r1.f_star <= 1e-3
    report("nonsmooth-convergence", ok,
           f"P3 f {r3.f_star:.2e} (<= 1e-4), P1 f {r1.f_star:.2e} (<= 1e-3; stretch 6e-9)")


def test_mu_sweep_trend():
    vals = []
    for mu in (1e-1, 1e-2, 1e-3):
        p = cardinality_relaxed(mu=mu)
        rep = run(p, initial_guess("IG1", 2), SolverConfig.preset("nonsmooth"))
        vals.append(float(np.max(np.abs(rep.x_star))))
    ok = vals[0] > vals[1] > vals[2]
    report("mu-sweep-trend", ok, "||x*||_inf " + " -> ".join(f"{v:.2e}" for v in vals)
           + " (strictly decreasing)")


def test_full_simplified_scalar_agreement():
    rng = np.random.default_rng(505)
    worst = 0.0
    for _ in range(100):
        s = random_state(rng, 1, min_step=0.05)
        a, b = simplified_update(s), full_update(s)
        worst = max(worst, np.max(np.abs(a[0] - b[0])), np.max(np.abs(a[1] - b[1])))
    report("full-simplified-n1", worst <= 1e-9, f"max deviation {worst:.2e} (<= 1e-9)")


def test_determinism(tmp_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    args = ["run", "--problem", "rosenbrock,woods", "--ig", "IG1,IG2", "--max-iter", "300",
            "--seed", "11"]
    codes = [cli_main([*args, "--out", str(p)]) for p in paths]
    same = paths[0].read_bytes() == paths[1].read_bytes()
    report("determinism", same and codes == [0, 0],
           f"byte-identical CSV payloads: {same}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
