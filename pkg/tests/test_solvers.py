import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pnpkit.core import BlurOperator, DivergenceError
from pnpkit.prior import DenoiserHandle, GmmPrior, gmm_denoiser, identity_denoiser
from pnpkit.prox import DataFidelity, data_fidelity_grad, prox_quadratic_fft
from pnpkit.solvers import (
    AdmmState,
    SolverConfig,
    admissible_step,
    admm_classic,
    pnp_admm,
    pnp_fista,
)


def prox_g_scalar(v, gamma):
    # g(x) = (x - 2)^2 / 2
    return (v + 2 * gamma) / (1 + gamma)


def prox_h_scalar(v, gamma):
    # h(x) = x^2 / 2
    return v / (1 + gamma)


def _fixed_point_scalar(gamma):
    """Fixed point of the affine ADMM map (x, z, s) -> (x', z', s') by a linear solve."""
    a, b = 1 / (1 + gamma), 2 * gamma / (1 + gamma)  # x' = a (z - s) + b
    c = 1 / (1 + gamma)                              # z' = c (x' + s)
    # express (x', z', s') as T (x, z, s) + t
    Tx, tx = np.array([0, a, -a]), b
    Tz, tz = c * (Tx + np.array([0, 0, 1])), c * tx
    Ts, ts = Tx - Tz + np.array([0, 0, 1]), tx - tz
    T = np.stack([Tx, Tz, Ts])
    t = np.array([tx, tz, ts])
    return np.linalg.solve(np.eye(3) - T, t)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(gamma=0.0), dict(gamma=1, sigma=0), dict(gamma=1, max_iter=0),
                                    dict(gamma=1, stop_tol=-1)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)

    def test_state_shapes(self):
        with pytest.raises(ValueError, match="shapes differ"):
            AdmmState(np.zeros(2), np.zeros(3), np.zeros(2))
        with pytest.raises(ValueError):
            AdmmState(np.zeros(2), np.zeros(2), np.zeros(2), k=-1)


class TestAdmmClassic:
    def test_scalar_fixed_point(self):
        fp = _fixed_point_scalar(1.0)
        assert fp[0] == pytest.approx(1.0, abs=1e-14)
        tr = admm_classic(prox_g_scalar, prox_h_scalar, AdmmState.from_x(np.zeros(1)),
                          SolverConfig(1.0, max_iter=200))
        assert abs(tr.final.x[0] - fp[0]) <= 1e-10
        assert abs(tr.final.s[0] - fp[2]) <= 1e-10

    def test_consensus_without_regularizer(self, rng):
        y = rng.random((5, 5))
        df = DataFidelity(BlurOperator.identity((5, 5)), y, 0.5)
        tr = admm_classic(lambda v, g: prox_quadratic_fft(df, g, v), lambda v, g: v,
                          AdmmState.from_x(np.zeros((5, 5))), SolverConfig(1.0, max_iter=300))
        np.testing.assert_allclose(tr.final.x, y, atol=1e-10)
        assert tr.primal_residual[-1] < 1e-10

    def test_trace_layout(self):
        tr = admm_classic(prox_g_scalar, prox_h_scalar, AdmmState.from_x(np.zeros(1)),
                          SolverConfig(1.0, max_iter=7))
        assert tr.n_records == 8 == len(tr.rel_change)
        assert math.isnan(tr.z_diff[0]) and math.isnan(tr.rel_change[-1])
        assert tr.final.k == 7

    def test_stop_tol(self):
        tr = admm_classic(prox_g_scalar, prox_h_scalar, AdmmState.from_x(np.zeros(1)),
                          SolverConfig(1.0, max_iter=500, stop_tol=1e-6))
        assert tr.n_records < 501
        assert tr.rel_change[-2] < 1e-6 <= min(tr.rel_change[:-2])

    def test_divergence_reports_iteration(self):
        calls = []

        def bad_prox(v, gamma):
            calls.append(1)
            return v * (np.nan if len(calls) == 3 else 1.0)

        with pytest.raises(DivergenceError, match="iteration 3"):
            admm_classic(bad_prox, prox_h_scalar, AdmmState.from_x(np.ones(1)), SolverConfig(1.0))


class TestPnpAdmm:
    def test_prox_oracle_equivalence(self):
        den = DenoiserHandle(lambda v, sigma: prox_h_scalar(v, 0.8))
        init = AdmmState(np.array([3.0]), np.array([-1.0]), np.array([0.5]))
        cfg = SolverConfig(0.8, max_iter=100, record_diagnostics=True)
        a = admm_classic(prox_g_scalar, prox_h_scalar, init, cfg)
        b = pnp_admm(prox_g_scalar, den, init, cfg)
        for name in ("xs", "zs", "ss"):
            np.testing.assert_allclose(getattr(a, name), getattr(b, name), atol=1e-12, rtol=0)

    def test_identity_equivalence(self, rng):
        y = rng.random((4, 4))
        df = DataFidelity(BlurOperator(np.full((3, 3), 1 / 9), (4, 4)), y, 0.1)
        pg = lambda v, g: prox_quadratic_fft(df, g, v)  # noqa: E731
        cfg = SolverConfig(0.3, max_iter=100, record_diagnostics=True)
        a = admm_classic(pg, lambda v, g: v, AdmmState.from_x(y), cfg)
        b = pnp_admm(pg, identity_denoiser(), AdmmState.from_x(y), cfg)
        np.testing.assert_allclose(a.xs, b.xs, atol=1e-12, rtol=0)

    def test_linear_gmm_matches_tikhonov(self):
        a_gain, y0, lam = 0.6, 0.9, 0.05
        mu, tau2, sigma, gamma = 0.2, 0.5, 0.3, 0.4
        prior = GmmPrior([1.0], [[mu]], [tau2])
        df = DataFidelity(BlurOperator(np.array([[a_gain]]), (1, 1)), np.array([[y0]]), lam)
        tr = pnp_admm(lambda v, g: prox_quadratic_fft(df, g, v), gmm_denoiser(prior),
                      AdmmState.from_x(df.y), SolverConfig(gamma, sigma, max_iter=400))
        kappa = sigma**2 / (gamma * tau2)  # curvature of the implicit quadratic regularizer
        x_star = (a_gain * y0 / lam + kappa * mu) / (a_gain**2 / lam + kappa)
        assert tr.final.x[0, 0] == pytest.approx(x_star, abs=1e-8)

    def test_expansive_reference_converges(self):
        from pnpkit.reference import reference_problem
        from pnpkit.prior import estimate_lipschitz_M

        prob = reference_problem()
        M = estimate_lipschitz_M(prob.prior, prob.sigma, prob.sigma**2, prob.box, 200, 1)
        cfg = SolverConfig(admissible_step(M), prob.sigma, max_iter=500)
        tr = pnp_admm(lambda v, g: prox_quadratic_fft(prob.df, g, v), gmm_denoiser(prob.prior),
                      prob.init, cfg)
        assert np.nanmin(tr.column("rel_change")) < 1e-6


def _fista_lasso_reference(A, y, lam_l1, step, x0, n_iter):
    """Textbook FISTA for 0.5||Ax - y||^2 + lam_l1 ||x||_1, returning all iterates."""
    x_prev = x = x0.copy()
    t = 1.0
    out = [x]
    for k in range(n_iter):
        if k == 0:
            w = x
        else:
            t_new = (1 + np.sqrt(1 + 4 * t * t)) / 2
            w = x + (t - 1) / t_new * (x - x_prev)
            t = t_new
        v = w - step * A.T @ (A @ w - y)
        x_prev, x = x, np.sign(v) * np.maximum(np.abs(v) - step * lam_l1, 0.0)
        out.append(x)
    return np.array(out)


class TestPnpFista:
    def test_identity_quadratic_converges(self):
        lam = 0.2
        df = DataFidelity(BlurOperator.identity((1, 1)), np.array([[1.3]]), lam)
        tr = pnp_fista(lambda w: data_fidelity_grad(df, w), identity_denoiser(), np.zeros((1, 1)),
                       SolverConfig(1.0, max_iter=100), step=lam)
        assert tr.final.x[0, 0] == pytest.approx(1.3, abs=1e-10)

    def test_matches_textbook_lasso(self):
        gen = np.random.default_rng(3)
        A = gen.standard_normal((12, 6))
        y = gen.standard_normal(12)
        L = np.linalg.norm(A, 2) ** 2
        step, lam_l1 = 1 / L, 0.3
        ref = _fista_lasso_reference(A, y, lam_l1, step, np.zeros(6), 60)
        soft = DenoiserHandle(lambda v, sigma: np.sign(v) * np.maximum(np.abs(v) - step * lam_l1, 0))
        tr = pnp_fista(lambda w: A.T @ (A @ w - y), soft, np.zeros(6),
                       SolverConfig(1.0, max_iter=60, record_diagnostics=True), step)
        np.testing.assert_allclose(np.array(tr.xs), ref, atol=1e-10)

    def test_momentum_sequence(self):
        tr = pnp_fista(lambda w: w, identity_denoiser(), np.ones(2), SolverConfig(1.0, max_iter=5),
                       0.5)
        assert tr.momentum[0] == 1.0
        assert tr.momentum[1] == pytest.approx((1 + math.sqrt(5)) / 2)
        for a, b in zip(tr.momentum, tr.momentum[1:]):
            assert b == pytest.approx((1 + math.sqrt(1 + 4 * a * a)) / 2)

    def test_bad_step(self):
        with pytest.raises(ValueError):
            pnp_fista(lambda w: w, identity_denoiser(), np.ones(2), SolverConfig(1.0), 0.0)

    def test_divergence(self):
        with pytest.raises(DivergenceError):
            pnp_fista(lambda w: w * np.inf, identity_denoiser(), np.ones(2), SolverConfig(1.0), 1.0)


class TestAdmissibleStep:
    def test_values(self):
        assert admissible_step(1.0, 1.0) == 0.5
        assert admissible_step(1.0) == pytest.approx(0.45)
        assert admissible_step(2.0) == pytest.approx(0.225)

    @pytest.mark.parametrize("M,safety", [(0.0, 0.9), (-1.0, 0.9), (1.0, 0.0), (1.0, 1.5)])
    def test_invalid(self, M, safety):
        with pytest.raises(ValueError):
            admissible_step(M, safety)

    @given(st.floats(1e-6, 1e6), st.floats(0.01, 0.99))
    def test_strictly_below_bound(self, M, safety):
        assert admissible_step(M, safety) * M < 0.5
