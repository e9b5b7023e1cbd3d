import numpy as np
import pytest

from conftest import eq_qp_update, full_constraints, random_state
from qmnewt.exceptions import DegenerateGeometryError, NumericalFailureError
from qmnewt.full import (
    KktSystem,
    MultiplierSolution,
    apply_full_update,
    assemble_kkt,
    compute_epsilon,
    compute_rho_hat,
    constraint_data,
    full_update,
    phi_objective,
    solve_multipliers,
)
from qmnewt.state import ModelState, QuadraticModel, model_gradient_at


def _unit_state(fvals=(0.0, 0.5, 1.5), g=(1.0, 1.0)):
    W = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
    m = QuadraticModel(np.array(g), np.eye(2))
    return ModelState(W, np.array(fvals), m, m, iter_index=2)


def eps_bruteforce(state):
    W, prev = state.window, state.prev_model
    out = []
    for j in range(1, state.n + 1):
        s = W[j] - W[j - 1]
        d = W[-1] - W[j]
        out.append(float(s @ prev.G @ d - s @ prev.g))
    return np.array(out)


def rho_hat_bruteforce(state):
    W, f, prev = state.window, state.fvals, state.prev_model
    out = []
    for j in range(1, state.n + 1):
        s = W[j] - W[j - 1]
        g_lag = model_gradient_at(prev, W[-2], W[j - 1])
        val = 2 * s @ g_lag - 2 * s @ prev.g - 2 * (f[j] - f[j - 1]) - s @ prev.G @ s
        out.append(float(val))
    return np.array(out)


class TestRightHandSides:
    def test_epsilon_worked_example(self):
        np.testing.assert_allclose(compute_epsilon(_unit_state()), [-1.0, -1.0])

    def test_epsilon_last_entry(self, rng):
        s = random_state(rng, 4)
        sk = s.window[-1] - s.window[-2]
        assert compute_epsilon(s)[-1] == pytest.approx(-(sk @ s.prev_model.g))

    def test_epsilon_zero_model(self, rng):
        s = random_state(rng, 3)
        zero = QuadraticModel(np.zeros(3), np.zeros((3, 3)))
        s = ModelState(s.window, s.fvals, zero, zero, s.iter_index)
        np.testing.assert_array_equal(compute_epsilon(s), 0.0)

    def test_rho_hat_worked_example(self):
        s = _unit_state()
        # g_prev(x_0) = (1,1) + (0,0)-(1,0) = (0,1); g_prev(x_1) = (1,1)
        # rho_1 = 2*0 - 2*1 - 2*0.5 - 1 = -4 ; rho_2 = 0 - 2 - 1 = -3
        np.testing.assert_allclose(compute_rho_hat(s), [-4.0, -3.0])
        np.testing.assert_allclose(compute_rho_hat(s), rho_hat_bruteforce(s))

    def test_rho_hat_last_entry_zero_hessian(self, rng):
        s = random_state(rng, 3)
        m = QuadraticModel(rng.standard_normal(3), np.zeros((3, 3)))
        s = ModelState(s.window, s.fvals, m, m, s.iter_index)
        assert compute_rho_hat(s)[-1] == pytest.approx(-2 * (s.fvals[-1] - s.fvals[-2]))

    @pytest.mark.parametrize("n", [1, 2, 3, 5])
    def test_against_bruteforce(self, rng, n):
        s = random_state(rng, n)
        np.testing.assert_allclose(compute_epsilon(s), eps_bruteforce(s), atol=1e-12)
        np.testing.assert_allclose(compute_rho_hat(s), rho_hat_bruteforce(s), atol=1e-11)


class TestAssembly:
    def test_orthonormal_h1(self):
        s = _unit_state()
        d = constraint_data(s)
        sys_ = assemble_kkt(s, d.eps, d.rho_hat, coupling="printed")
        np.testing.assert_allclose(sys_.H1, np.eye(2))
        full = assemble_kkt(s, d.eps, d.rho_hat, coupling="full")
        np.testing.assert_allclose(full.H1, np.eye(2))

    @pytest.mark.parametrize("coupling", ["printed", "full"])
    def test_scalar_window(self, coupling):
        m = QuadraticModel(np.array([0.3]), np.array([[2.0]]), nu=1.5)
        s = ModelState(np.array([[1.0], [3.0]]), np.array([0.0, 1.0]), m, m, iter_index=1)
        sys_ = assemble_kkt(s, [0.1], [0.2], coupling=coupling)
        np.testing.assert_allclose(sys_.H1, [[16.0]])
        np.testing.assert_allclose(sys_.D, [[1.5 * 4.0]])
        np.testing.assert_allclose(sys_.B, [[0.0]])
        np.testing.assert_allclose(sys_.rhs, [2 * 1.5 * 0.2, 2 * 1.5 * 0.1])

    def test_nu_linearity(self, rng):
        s = random_state(rng, 3, nu=1.0)
        s2 = s.with_model(QuadraticModel(s.model.g, s.model.G, 2.0))
        d = constraint_data(s)
        a = assemble_kkt(s, d.eps, d.rho_hat, coupling="printed")
        b = assemble_kkt(s2, d.eps, d.rho_hat, coupling="printed")
        np.testing.assert_allclose(b.rhs, 2 * a.rhs)
        np.testing.assert_allclose(b.H1, a.H1)
        np.testing.assert_allclose(b.B, a.B)
        SS = np.diff(s.window, axis=0) @ np.diff(s.window, axis=0).T
        np.testing.assert_allclose(b.D - a.D, SS)

    def test_degenerate_step(self, rng):
        s = random_state(rng, 3)
        W = s.window.copy()
        W[2] = W[1]
        bad = ModelState(W, s.fvals, s.model, s.prev_model, s.iter_index)
        with pytest.raises(DegenerateGeometryError) as info:
            assemble_kkt(bad, np.zeros(3), np.zeros(3))
        assert info.value.index == 2

    def test_matvec_matches_matrix(self, rng):
        s = random_state(rng, 4)
        d = constraint_data(s)
        sys_ = assemble_kkt(s, d.eps, d.rho_hat, coupling="full")
        v = rng.standard_normal(8)
        np.testing.assert_allclose(sys_.matvec(v), sys_.matrix @ v, atol=1e-12)


class TestSolve:
    def test_identity(self):
        I2 = np.eye(2)
        z = np.zeros((2, 2))
        sys_ = KktSystem(I2, z, z, 0.5 * I2, np.array([1.0, 0.0, 0.0, 0.0]))
        sol = solve_multipliers(sys_)
        np.testing.assert_allclose(np.concatenate([sol.eta, sol.theta]), [1, 0, 0, 0], atol=1e-14)

    def test_singular_raises(self):
        z = np.zeros((2, 2))
        sys_ = KktSystem(z, z, z, z, np.ones(4))
        with pytest.raises(NumericalFailureError):
            solve_multipliers(sys_, max_iter=10)

    def test_random_matches_lu(self, rng):
        s = random_state(rng, 3)
        d = constraint_data(s)
        sys_ = assemble_kkt(s, d.eps, d.rho_hat, coupling="full")
        sol = solve_multipliers(sys_, tol=1e-12)
        ref = np.linalg.solve(sys_.matrix, sys_.rhs)
        np.testing.assert_allclose(np.concatenate([sol.eta, sol.theta]), ref, rtol=1e-8, atol=1e-10)


class TestUpdateMap:
    def test_zero_multipliers(self, rng):
        s = random_state(rng, 3)
        dg, dG = apply_full_update(s, MultiplierSolution(np.zeros(3), np.zeros(3)))
        assert not dg.any() and not dG.any()

    def test_scalar_gap_vanishes(self):
        m = QuadraticModel(np.zeros(2), np.eye(2))
        W = np.array([[0.0, 0.0], [0.0, 1.0], [2.0, 1.0]])
        s = ModelState(W, np.zeros(3), m, m, iter_index=2)
        dg, dG = apply_full_update(s, MultiplierSolution(np.array([0.0, 0.0]), np.array([0.0, 1.0])))
        np.testing.assert_allclose(dg, [2.0, 0.0])
        np.testing.assert_allclose(dG, 0.0)

    def test_sum_of_outer_products(self, rng):
        s = random_state(rng, 2)
        eta, theta = rng.standard_normal(2), rng.standard_normal(2)
        W = s.window
        dg_ref = np.zeros(2)
        M = np.zeros((2, 2))
        for j in range(2):
            sig = W[j + 1] - W[j]
            gap = W[-1] - W[j + 1]
            dg_ref += theta[j] * sig
            M += eta[j] * np.outer(sig, sig) - 2 * theta[j] * np.outer(sig, gap)
        M /= 2 * s.model.nu
        dg, dG, asym = apply_full_update(s, MultiplierSolution(eta, theta), return_asymmetry=True)
        np.testing.assert_allclose(dg, dg_ref, atol=1e-14)
        np.testing.assert_allclose(dG, 0.5 * (M + M.T), atol=1e-14)
        assert asym == pytest.approx(0.5 * np.linalg.norm(M - M.T))


class TestFullUpdate:
    @pytest.mark.parametrize("n", [2, 3, 5])
    def test_satisfies_all_constraints(self, rng, n):
        s = random_state(rng, n)
        d = constraint_data(s)
        dg, dG = full_update(s, coupling="full")
        for a, A, b in full_constraints(s, d.eps, d.rho_hat):
            lhs = a @ dg + np.sum(A * dG)
            assert lhs == pytest.approx(b, abs=1e-8 * max(1.0, np.linalg.norm(d.eps)))

    @pytest.mark.parametrize("n", [1, 2, 4])
    def test_matches_qp_oracle(self, rng, n):
        s = random_state(rng, n)
        d = constraint_data(s)
        dg, dG = full_update(s, coupling="full")
        ref_g, ref_G = eq_qp_update(n, s.model.nu, full_constraints(s, d.eps, d.rho_hat))
        np.testing.assert_allclose(dg, ref_g, atol=1e-8)
        np.testing.assert_allclose(dG, ref_G, atol=1e-8)

    def test_printed_coupling_misses_constraints(self, rng):
        # diagonal row-sum blocks are not the exact stationarity system
        worst = 0.0
        for _ in range(20):
            s = random_state(rng, 3)
            d = constraint_data(s)
            dg, dG = full_update(s, coupling="printed")
            res = [a @ dg + np.sum(A * dG) - b for a, A, b in full_constraints(s, d.eps, d.rho_hat)]
            worst = max(worst, np.max(np.abs(res)) / np.linalg.norm(np.r_[d.eps, d.rho_hat]))
        assert worst > 1e-3


def test_phi_objective():
    assert phi_objective([3.0, 4.0], np.eye(2), 2.0) == pytest.approx(12.5 + 2.0)
    with pytest.raises(ValueError):
        phi_objective([1.0], np.eye(1), 0.0)
