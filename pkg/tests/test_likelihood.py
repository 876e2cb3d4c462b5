"""Tests for the forward transform, innovation recursion, and the three
likelihood routes."""

import numpy as np
import pytest

from oracles import (
    brute_covariance,
    brute_loglik,
    conditional_innovation_covs,
    forward_map_matrix,
    random_symcomm,
)
from varmaove.errors import DegenerateModelError, DimensionError, InsufficientDataError
from varmaove.likelihood import (
    _chol_with_jitter,
    forward_transform,
    gamma_w,
    innovations,
    log_likelihood,
    log_likelihood_symcomm,
    log_likelihood_varma11,
    one_step_forecast,
)
from varmaove.varma import SymCommParams, VarmaParams, simulate, stationary_covariance


def white_noise(n=2, scale=1.0):
    return VarmaParams(phi=[], theta=[], sigma_eps=scale * np.eye(n))


def scalar_params(phi=0.0, theta=0.0, sigma2=1.0):
    return VarmaParams(phi=[[[phi]]], theta=[[[theta]]], sigma_eps=[[sigma2]])


class TestForwardTransform:
    def test_no_ar_part_is_identity(self):
        rng = np.random.default_rng(0)
        params = VarmaParams(phi=[], theta=[0.4 * np.eye(2)], sigma_eps=np.eye(2))
        y = simulate(params, 20, rng)
        fw = forward_transform(y, params)
        np.testing.assert_array_equal(fw.w, y)
        assert fw.l == 1

    def test_scalar_example(self):
        params = scalar_params(phi=0.5, theta=0.1)
        y = np.array([[1.0], [2.0], [3.0]])
        fw = forward_transform(y, params)
        np.testing.assert_allclose(fw.w[:, 0], [0.0, 0.5, 3.0], atol=1e-15)

    def test_reconstruction_roundtrip(self):
        rng = np.random.default_rng(1)
        sp = random_symcomm(rng, 2)
        params = sp.expand()
        y = simulate(params, 15, rng)
        fw = forward_transform(y, params)
        m = forward_map_matrix(params, 15)
        y_back = np.linalg.solve(m, fw.w.reshape(-1)).reshape(15, 2)
        np.testing.assert_allclose(y_back, y, atol=1e-12)

    def test_short_series_rejected(self):
        params = scalar_params(phi=0.5, theta=0.1)
        with pytest.raises(InsufficientDataError):
            forward_transform(np.array([[1.0]]), params)

    def test_wrong_width_rejected(self):
        with pytest.raises(DimensionError):
            forward_transform(np.zeros((10, 3)), white_noise(2))


class TestGammaW:
    def test_white_noise_diagonal_case(self):
        sigma = np.array([[0.5, 0.1], [0.1, 0.8]])
        params = VarmaParams(phi=[], theta=[], sigma_eps=sigma)
        gw = gamma_w(params, 10)
        for t in (1, 5, 10):
            np.testing.assert_allclose(gw(t, t), sigma, atol=1e-12)

    def test_varma11_lag1_band(self):
        rng = np.random.default_rng(2)
        sp = random_symcomm(rng, 2)
        params = sp.expand()
        gw = gamma_w(params, 12)
        want = params.sigma_eps @ params.theta[0].T
        # interior rows carry the MA band entry Sigma_eps Theta'
        for t in (2, 6, 11):
            np.testing.assert_allclose(gw(t, t - 1), want, atol=1e-10)

    def test_tail_mixed_entry_matches_band_on_symcomm(self):
        rng = np.random.default_rng(3)
        sp = random_symcomm(rng, 2)
        params = sp.expand()
        gw = gamma_w(params, 12)
        want = params.sigma_eps @ params.theta[0].T
        np.testing.assert_allclose(gw(12, 11), want, atol=1e-10)

    def test_beyond_band_is_zero(self):
        rng = np.random.default_rng(4)
        params = random_symcomm(rng, 2).expand()
        gw = gamma_w(params, 12)
        for t in (3, 7, 11):
            np.testing.assert_allclose(gw(t, t - 2), np.zeros((2, 2)), atol=1e-12)

    def test_last_diagonal_is_stationary_covariance(self):
        rng = np.random.default_rng(5)
        params = random_symcomm(rng, 2).expand()
        gw = gamma_w(params, 9)
        np.testing.assert_allclose(
            gw(9, 9), stationary_covariance(params), atol=1e-12
        )


class TestInnovations:
    def test_white_noise_unpredictable(self):
        sigma = np.array([[0.4, 0.0], [0.0, 0.9]])
        params = VarmaParams(phi=[], theta=[], sigma_eps=sigma)
        y = simulate(params, 12, np.random.default_rng(0))
        inn = innovations(y, params)
        np.testing.assert_allclose(inn.predictors, np.zeros_like(y), atol=1e-14)
        np.testing.assert_allclose(inn.residuals, y, atol=1e-14)
        for t in range(12):
            np.testing.assert_allclose(inn.sigma_t[t], sigma, atol=1e-12)

    def test_varma11_recursion_identities(self):
        # Theta_{t,1} = Sigma_eps Theta' Sigma_t^{-1} and the Sigma_t
        # update, as printed for the order-(1,1) specialization.
        rng = np.random.default_rng(6)
        sp = random_symcomm(rng, 2)
        params = sp.expand()
        y = simulate(params, 10, rng)
        inn = innovations(y, params)
        sig = params.sigma_eps
        theta = params.theta[0]
        ma_cov = theta @ sig @ theta.T + sig
        np.testing.assert_allclose(inn.sigma_t[0], ma_cov, atol=1e-10)
        for t in range(1, 10):
            th_t1 = inn.theta_coeffs[t - 1][0]
            want = sig @ theta.T @ np.linalg.inv(inn.sigma_t[t - 1])
            np.testing.assert_allclose(th_t1, want, atol=1e-8)
            base = (
                stationary_covariance(params) if t == 9 else ma_cov
            )
            want_sig = base - th_t1 @ inn.sigma_t[t - 1] @ th_t1.T
            np.testing.assert_allclose(inn.sigma_t[t], want_sig, atol=1e-8)

    def test_sigma_t_against_conditioning_oracle(self):
        rng = np.random.default_rng(7)
        sp = random_symcomm(rng, 1)
        params = sp.expand()
        y = simulate(params, 5, rng)
        inn = innovations(y, params)
        cov_y = brute_covariance(params, 5)
        m = forward_map_matrix(params, 5)
        cov_w = m @ cov_y @ m.T
        want = conditional_innovation_covs(cov_w, 1)
        for t in range(5):
            np.testing.assert_allclose(inn.sigma_t[t], want[t], atol=1e-10)

    def test_sigma_t_monotone_to_steady_state(self):
        params = scalar_params(phi=0.4, theta=0.5)
        y = simulate(params, 30, np.random.default_rng(8))
        inn = innovations(y, params)
        # interior Sigma_t decreases toward sigma^2 (the innovation variance)
        vals = inn.sigma_t[:-1, 0, 0]
        assert np.all(np.diff(vals) <= 1e-12)
        assert vals[-1] == pytest.approx(1.0, abs=1e-3)

    def test_sigma_t_symmetric_pd(self):
        rng = np.random.default_rng(9)
        for _ in range(5):
            params = random_symcomm(rng, 3).expand()
            y = simulate(params, 15, rng)
            inn = innovations(y, params)
            for t in range(15):
                s = inn.sigma_t[t]
                assert np.max(np.abs(s - s.T)) < 1e-12
                assert np.linalg.eigvalsh(s).min() > 0


class TestJitterPolicy:
    def test_slightly_indefinite_matrix_recovers(self):
        mat = np.diag([1.0, -1e-14])
        chol, fixed = _chol_with_jitter(mat, 3)
        assert np.all(np.isfinite(chol))
        assert np.linalg.eigvalsh(fixed).min() > 0

    def test_badly_indefinite_raises_with_index(self):
        mat = np.diag([1.0, -1.0])
        with pytest.raises(DegenerateModelError) as err:
            _chol_with_jitter(mat, 7)
        assert err.value.t == 7


class TestLogLikelihood:
    def test_white_noise_closed_form(self):
        params = white_noise(2)
        y = simulate(params, 50, np.random.default_rng(0))
        parts = log_likelihood(y, params)
        want = -0.5 * 2 * 50 * np.log(2 * np.pi) - 0.5 * np.sum(y**2)
        assert parts.total == pytest.approx(want, abs=1e-10)
        assert parts.log_g0 == pytest.approx(-0.5 * 2 * 50 * np.log(2 * np.pi))

    def test_brute_force_small_instances(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            n = int(rng.integers(1, 4))
            sp = random_symcomm(rng, n)
            params = sp.expand()
            t_len = int(rng.integers(2, 9))
            y = simulate(params, t_len, rng)
            got = log_likelihood(y, params).total
            want = brute_loglik(y, params)
            assert got == pytest.approx(want, rel=1e-8, abs=1e-8)

    def test_higher_order_brute_force(self):
        # The general route is certified against the dense Gaussian
        # density on simultaneously diagonalizable higher-order models.
        rng = np.random.default_rng(2)
        for p, q in [(2, 1), (3, 1), (1, 2), (1, 3), (2, 2)]:
            n = 2
            qmat, r = np.linalg.qr(rng.normal(size=(n, n)))
            phis = [
                qmat @ np.diag(rng.uniform(-0.4, 0.4, n) * 0.5**i) @ qmat.T
                for i in range(p)
            ]
            phis = [0.5 * (m + m.T) for m in phis]
            thetas = [
                float(rng.uniform(-0.4, 0.4)) * 0.5**j * np.eye(n) for j in range(q)
            ]
            sig = qmat @ np.diag(rng.uniform(0.2, 0.8, n)) @ qmat.T
            params = VarmaParams(phi=phis, theta=thetas, sigma_eps=0.5 * (sig + sig.T))
            y = simulate(params, 8, rng)
            got = log_likelihood(y, params).total
            want = brute_loglik(y, params)
            assert got == pytest.approx(want, rel=1e-8, abs=1e-8)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(3)
        sp = random_symcomm(rng, 3)
        params = sp.expand()
        y = simulate(params, 12, rng)
        perm = np.array([2, 0, 1])
        pmat = np.eye(3)[perm]
        permuted = VarmaParams(
            phi=[pmat @ params.phi[0] @ pmat.T],
            theta=[pmat @ params.theta[0] @ pmat.T],
            sigma_eps=pmat @ params.sigma_eps @ pmat.T,
        )
        got = log_likelihood(y @ pmat.T, permuted).total
        want = log_likelihood(y, params).total
        assert got == pytest.approx(want, rel=1e-10)


class TestUnitJacobian:
    def test_forward_map_determinant_is_one(self):
        rng = np.random.default_rng(4)
        for t_len in (3, 6, 10):
            params = random_symcomm(rng, 2).expand()
            m = forward_map_matrix(params, t_len)
            sign, logdet = np.linalg.slogdet(m)
            assert sign == 1.0
            assert abs(logdet) < 1e-9


class TestVarma11Route:
    def test_agreement_with_general(self):
        rng = np.random.default_rng(5)
        for _ in range(40):
            n = int(rng.integers(1, 4))
            sp = random_symcomm(rng, n)
            params = sp.expand()
            t_len = int(rng.integers(2, 26))
            y = simulate(params, t_len, rng)
            a = log_likelihood(y, params).log_g1
            b = log_likelihood_varma11(y, params).log_g1
            assert b == pytest.approx(a, rel=1e-10, abs=1e-10)

    def test_pure_ma_case(self):
        rng = np.random.default_rng(6)
        params = VarmaParams(
            phi=[np.zeros((2, 2))], theta=[0.5 * np.eye(2)], sigma_eps=np.eye(2)
        )
        y = simulate(params, 15, rng)
        a = log_likelihood(y, params).log_g1
        b = log_likelihood_varma11(y, params).log_g1
        assert b == pytest.approx(a, rel=1e-12, abs=1e-12)

    def test_pure_ar_residuals_hand_case(self):
        # Theta = 0 makes every coefficient vanish: R_t = Y_t - phi Y_{t+1}
        # for t < T and R_T = Y_T (after the alpha recursion collapses).
        phi = 0.6
        params = scalar_params(phi=phi)
        y = np.array([[1.0], [-0.5], [2.0]])
        got = log_likelihood_varma11(y, params)
        gamma0 = 1.0 / (1 - phi**2)
        r = np.array([1.0 - phi * (-0.5), -0.5 - phi * 2.0, 2.0])
        sigmas = np.array([1.0, 1.0, gamma0])
        want_g1 = -0.5 * np.sum(np.log(sigmas)) - 0.5 * np.sum(r**2 / sigmas)
        assert got.log_g1 == pytest.approx(want_g1, abs=1e-12)

    def test_rejects_other_orders(self):
        with pytest.raises(ValueError):
            log_likelihood_varma11(np.zeros((5, 2)), white_noise(2))


class TestSymCommRoute:
    def test_reduces_to_white_noise(self):
        rng = np.random.default_rng(7)
        q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
        sp = SymCommParams(theta=0.0, basis=q, lam_phi=[0.0, 0.0], lam_sigma=[0.3, 0.6])
        params = sp.expand()
        y = simulate(params, 20, rng)
        got = log_likelihood_symcomm(y, sp)
        want = log_likelihood(y, params)
        assert got.log_g1 == pytest.approx(want.log_g1, rel=1e-12, abs=1e-12)

    def test_agreement_with_general(self):
        rng = np.random.default_rng(8)
        for _ in range(25):
            n = int(rng.integers(1, 4))
            sp = random_symcomm(rng, n)
            y = simulate(sp.expand(), 25, rng)
            a = log_likelihood(y, sp.expand()).log_g1
            b = log_likelihood_symcomm(y, sp).log_g1
            assert b == pytest.approx(a, rel=1e-10, abs=1e-10)

    def test_diagonal_case_sums_scalar_likelihoods(self):
        rng = np.random.default_rng(9)
        sp = SymCommParams(
            theta=0.35,
            basis=np.eye(3),
            lam_phi=[0.5, -0.2, 0.0],
            lam_sigma=[0.3, 0.5, 0.8],
        )
        y = simulate(sp.expand(), 18, rng)
        total = log_likelihood_symcomm(y, sp).total
        scalar_sum = 0.0
        for k in range(3):
            pk = scalar_params(
                phi=sp.lam_phi[k], theta=sp.theta, sigma2=sp.lam_sigma[k]
            )
            scalar_sum += log_likelihood(y[:, [k]], pk).total
        assert total == pytest.approx(scalar_sum, rel=1e-10)

    def test_three_routes_pairwise(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            n = int(rng.integers(1, 4))
            sp = random_symcomm(rng, n)
            params = sp.expand()
            y = simulate(params, 25, rng)
            a = log_likelihood(y, params).log_g1
            b = log_likelihood_varma11(y, params).log_g1
            c = log_likelihood_symcomm(y, sp).log_g1
            assert b == pytest.approx(a, rel=1e-10, abs=1e-10)
            assert c == pytest.approx(a, rel=1e-10, abs=1e-10)
            assert c == pytest.approx(b, rel=1e-10, abs=1e-10)


class TestOneStepForecast:
    def test_white_noise_forecast_is_zero(self):
        params = white_noise(2)
        y = simulate(params, 10, np.random.default_rng(0))
        np.testing.assert_allclose(one_step_forecast(y, params), 0.0, atol=1e-12)

    def test_ar1_forecast_is_phi_y(self):
        params = scalar_params(phi=0.7)
        y = simulate(params, 40, np.random.default_rng(1))
        got = one_step_forecast(y, params)
        assert got[0] == pytest.approx(0.7 * y[-1, 0], abs=1e-8)

    def test_matches_conditional_mean_oracle(self):
        rng = np.random.default_rng(2)
        sp = random_symcomm(rng, 2)
        params = sp.expand()
        y = simulate(params, 8, rng)
        cov = brute_covariance(params, 9)
        # E[Y_9 | Y_1..8] from the dense joint covariance
        a = slice(16, 18)
        b = slice(0, 16)
        want = cov[a, b] @ np.linalg.solve(cov[b, b], y.reshape(-1))
        np.testing.assert_allclose(one_step_forecast(y, params), want, atol=1e-8)
