import numpy as np
import pytest

from conftest import random_state
from qmnewt.diagnostics import (
    ResidualRecord,
    approximation_scaling_probe,
    constraint_residuals,
    interpolation_model,
    residual_decay_check,
    simplified_residuals_expanded,
)
from qmnewt.exceptions import ConfigError
from qmnewt.full import compute_epsilon, compute_rho_hat, full_update
from qmnewt.problems import Problem, expsin, get_problem, quadratic
from qmnewt.simplified import simplified_update
from qmnewt.state import ModelState, QuadraticModel

RADII = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]


def residuals_by_loop(state, dg, dG):
    W = state.window
    eps, rho = compute_epsilon(state), compute_rho_hat(state)
    e1, e2 = [], []
    for j in range(state.n - 1):
        s = W[j + 1] - W[j]
        d = W[-1] - W[j + 1]
        e1.append(s @ dG @ s - rho[j])
        e2.append(s @ dg - s @ dG @ d - eps[j])
    return np.array(e1), np.array(e2)


class TestConstraintResiduals:
    def test_zero_update_zero_rhs(self, rng):
        s = random_state(rng, 3)
        zero = QuadraticModel(np.zeros(3), np.zeros((3, 3)))
        s = ModelState(s.window, np.zeros(4), zero, zero, s.iter_index)
        rec = constraint_residuals(s, np.zeros(3), np.zeros((3, 3)))
        np.testing.assert_array_equal(rec.e1, 0.0)
        assert rec.e1.shape == (2,)

    def test_full_update_small(self, rng):
        for _ in range(5):
            s = random_state(rng, 4)
            dg, dG = full_update(s)
            rec = constraint_residuals(s, dg, dG)
            scale = np.linalg.norm(np.r_[compute_epsilon(s), compute_rho_hat(s)])
            assert rec.e1_inf <= 1e-9 * scale
            assert rec.e2_inf <= 1e-9 * scale

    def test_simplified_matches_loop(self, rng):
        s = random_state(rng, 3)
        dg, dG = simplified_update(s)
        rec = constraint_residuals(s, dg, dG)
        e1, e2 = residuals_by_loop(s, dg, dG)
        np.testing.assert_allclose(rec.e1, e1, atol=1e-12)
        np.testing.assert_allclose(rec.e2, e2, atol=1e-12)
        assert rec.e1_inf > 1e-6

    @pytest.mark.parametrize("n", [2, 3, 6])
    def test_expanded_form_agrees(self, rng, n):
        s = random_state(rng, n)
        dg, dG = simplified_update(s)
        a = constraint_residuals(s, dg, dG)
        b = simplified_residuals_expanded(s)
        np.testing.assert_allclose(b.e1, a.e1, atol=1e-10)
        np.testing.assert_allclose(b.e2, a.e2, atol=1e-10)

    def test_scalar_window_is_empty(self, rng):
        s = random_state(rng, 1)
        rec = constraint_residuals(s, *simplified_update(s))
        assert rec.e1.size == 0 and rec.e1_inf == 0.0


class TestDecayCheck:
    def test_all_zero(self):
        trace = [ResidualRecord.from_vectors([0.0], [0.0], [1.0]) for _ in range(4)]
        rep = residual_decay_check(trace)
        np.testing.assert_array_equal(rep.ratio1, 0.0)
        assert rep.bounded

    def test_constant_ratio(self):
        sn = [np.array([2.0, 0.5]), np.array([1e-3, 1e-4])]
        trace = [ResidualRecord.from_vectors(0.3 * s, 0.7 * s, s) for s in sn]
        rep = residual_decay_check(trace)
        np.testing.assert_allclose(rep.ratio1, 0.3)
        np.testing.assert_allclose(rep.ratio2, 0.7)
        assert rep.bounded

    def test_spike_is_unbounded(self):
        sn = np.array([1.0])
        trace = [ResidualRecord.from_vectors(sn, sn, sn) for _ in range(5)]
        trace.append(ResidualRecord.from_vectors(100 * sn, sn, sn))
        assert not residual_decay_check(trace).bounded

    def test_explicit_sigma_norms(self):
        trace = [ResidualRecord.from_vectors([1.0], [2.0]) for _ in range(3)]
        rep = residual_decay_check(trace, sigma_norms=[[2.0]] * 3)
        np.testing.assert_allclose(rep.ratio1, 0.5)

    def test_short_trace(self):
        with pytest.raises(ConfigError):
            residual_decay_check([ResidualRecord.from_vectors([0.0], [0.0])])


class TestProbe:
    def test_interpolation_recovers_quadratic(self, rng):
        A = rng.standard_normal((3, 3))
        H = A + A.T
        b = rng.standard_normal(3)
        fun = lambda x: b @ x + 0.5 * x @ H @ x
        V = rng.standard_normal((9, 3))
        g, G = interpolation_model(fun, np.zeros(3), V)
        np.testing.assert_allclose(g, b, atol=1e-10)
        np.testing.assert_allclose(G, H, atol=1e-10)

    def test_expsin_orders(self):
        gs, hs = approximation_scaling_probe(expsin(), np.zeros(2), RADII)
        assert 1.7 <= gs <= 2.3
        assert 0.7 <= hs <= 1.3
        assert gs > hs

    def test_quadratic_floor(self):
        res = approximation_scaling_probe(quadratic(2), np.zeros(2), RADII)
        assert res.floor_detected
        assert np.all(res.grad_errors < 1e-8)
        assert res.grad_errors.shape == (5,)

    def test_affine_raw_data(self):
        p = Problem(
            "affine", 2, lambda x: 1.0 + x[0] - 2 * x[1],
            analytic_grad=lambda x: np.array([1.0, -2.0]),
            analytic_hess=lambda x: np.zeros((2, 2)),
        )
        res = approximation_scaling_probe(p, np.zeros(2), RADII)
        assert res.hess_errors.shape == (5,)
        assert res.floor_detected

    def test_requires_derivatives(self):
        with pytest.raises(ConfigError):
            approximation_scaling_probe(get_problem("p3"), np.zeros(2), RADII)

    @pytest.mark.parametrize("radii", [RADII[::-1], RADII[:3], [1e-1, 1e-1, 1e-2, 1e-3, 1e-4]])
    def test_bad_radii(self, radii):
        with pytest.raises(ConfigError):
            approximation_scaling_probe(expsin(), np.zeros(2), radii)

    def test_seed_reproducible(self):
        a = approximation_scaling_probe(expsin(), np.zeros(2), RADII, seed=3)
        b = approximation_scaling_probe(expsin(), np.zeros(2), RADII, seed=3)
        np.testing.assert_array_equal(a.grad_errors, b.grad_errors)
