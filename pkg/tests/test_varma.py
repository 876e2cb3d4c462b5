"""Tests for parameter validation, simulation, and covariances."""

import numpy as np
import pytest

from oracles import lyapunov_fixed_point, random_symcomm
from varmaove.errors import DimensionError, InvalidModelError
from varmaove.varma import (
    SymCommParams,
    VarmaParams,
    autocovariance,
    ar_companion,
    ma_companion,
    simulate,
    stationary_covariance,
    validate,
)


def white_noise(n=2):
    return VarmaParams(phi=[], theta=[], sigma_eps=np.eye(n))


def scalar_params(phi=0.0, theta=0.0, sigma2=1.0):
    return VarmaParams(phi=[[[phi]]], theta=[[[theta]]], sigma_eps=[[sigma2]])


class TestValidate:
    def test_zero_matrices_valid(self):
        params = VarmaParams(
            phi=[np.zeros((2, 2))], theta=[np.zeros((2, 2))], sigma_eps=np.eye(2)
        )
        report = validate(params)
        assert report.valid
        assert report.violations == ()

    def test_explosive_ar_invalid(self):
        params = VarmaParams(phi=[1.1 * np.eye(2)], theta=[], sigma_eps=np.eye(2))
        report = validate(params)
        assert not report.valid
        assert any("AR stationarity" in v for v in report.violations)

    def test_noninvertible_ma_flagged(self):
        params = VarmaParams(phi=[], theta=[1.2 * np.eye(2)], sigma_eps=np.eye(2))
        report = validate(params)
        assert any("MA invertibility" in v for v in report.violations)

    def test_indefinite_sigma_flagged(self):
        params = VarmaParams(phi=[], theta=[], sigma_eps=[[1.0, 2.0], [2.0, 1.0]])
        report = validate(params)
        assert any("positive definite" in v for v in report.violations)

    def test_asymmetric_sigma_flagged(self):
        params = VarmaParams(phi=[], theta=[], sigma_eps=[[1.0, 0.3], [0.0, 1.0]])
        report = validate(params)
        assert any("symmetric" in v for v in report.violations)

    def test_random_symcomm_expansions_valid(self):
        # Companion eigenvalues of the expansion are exactly the sampled
        # eigenvalue ranges, checked against a direct eigendecomposition.
        rng = np.random.default_rng(1)
        for _ in range(25):
            sp = random_symcomm(rng, int(rng.integers(1, 5)))
            params = sp.expand()
            assert validate(params).valid
            ar_eigs = np.sort(np.abs(np.linalg.eigvals(ar_companion(params))))
            assert np.allclose(ar_eigs, np.sort(np.abs(sp.lam_phi)), atol=1e-8)
            ma_eigs = np.abs(np.linalg.eigvals(ma_companion(params)))
            assert np.allclose(ma_eigs, abs(sp.theta), atol=1e-10)

    def test_dimension_mismatch_is_structural(self):
        with pytest.raises(DimensionError):
            VarmaParams(phi=[np.zeros((3, 3))], theta=[], sigma_eps=np.eye(2))
        with pytest.raises(DimensionError):
            VarmaParams(phi=[], theta=[], sigma_eps=np.zeros((2, 3)))

    def test_declared_order_mismatch(self):
        with pytest.raises(DimensionError):
            VarmaParams.from_dict(
                {"p": 2, "q": 0, "phi": [[[0.5]]], "theta": [], "sigma_eps": [[1.0]]}
            )


class TestSymCommParams:
    def test_rejects_non_orthogonal_basis(self):
        with pytest.raises(InvalidModelError):
            SymCommParams(
                theta=0.1,
                basis=[[1.0, 0.5], [0.0, 1.0]],
                lam_phi=[0.1, 0.1],
                lam_sigma=[0.5, 0.5],
            )

    def test_rejects_out_of_range_eigenvalues(self):
        with pytest.raises(InvalidModelError):
            SymCommParams(theta=0.95, basis=np.eye(1), lam_phi=[0.1], lam_sigma=[0.5])
        with pytest.raises(InvalidModelError):
            SymCommParams(theta=0.1, basis=np.eye(1), lam_phi=[0.95], lam_sigma=[0.5])
        with pytest.raises(InvalidModelError):
            SymCommParams(theta=0.1, basis=np.eye(1), lam_phi=[0.1], lam_sigma=[0.95])

    def test_expansion_matches_construction(self):
        rng = np.random.default_rng(3)
        sp = random_symcomm(rng, 3)
        params = sp.expand()
        p = sp.basis
        assert np.allclose(params.phi[0], p @ np.diag(sp.lam_phi) @ p.T, atol=1e-12)
        assert np.allclose(params.theta[0], sp.theta * np.eye(3))
        assert np.allclose(params.sigma_eps, p @ np.diag(sp.lam_sigma) @ p.T, atol=1e-12)


class TestSimulate:
    def test_white_noise_moments(self):
        y = simulate(white_noise(2), 100_000, np.random.default_rng(0))
        assert np.max(np.abs(y.mean(axis=0))) < 0.02
        emp_cov = np.cov(y.T)
        assert np.linalg.norm(emp_cov - np.eye(2)) < 0.05

    def test_scalar_ar1_variance(self):
        # gamma solves gamma = phi^2 gamma + sigma^2; fixed-point value 4/3.
        gamma = 1.0
        for _ in range(200):
            gamma = 0.25 * gamma + 1.0
        assert abs(gamma - 4.0 / 3.0) < 1e-12
        y = simulate(scalar_params(phi=0.5), 100_000, np.random.default_rng(1))
        assert abs(y.var() - gamma) / gamma < 0.05

    def test_seeded_determinism(self):
        params = random_symcomm(np.random.default_rng(5), 2).expand()
        y1 = simulate(params, 500, np.random.default_rng(123))
        y2 = simulate(params, 500, np.random.default_rng(123))
        np.testing.assert_array_equal(y1, y2)

    def test_invalid_params_raise(self):
        params = VarmaParams(phi=[1.1 * np.eye(2)], theta=[], sigma_eps=np.eye(2))
        with pytest.raises(InvalidModelError):
            simulate(params, 10, np.random.default_rng(0))

    def test_nonpositive_length_rejected(self):
        with pytest.raises(ValueError):
            simulate(white_noise(), 0, np.random.default_rng(0))


class TestStationaryCovariance:
    def test_white_noise_equals_sigma(self):
        sigma = np.array([[0.5, 0.1], [0.1, 0.7]])
        params = VarmaParams(phi=[], theta=[], sigma_eps=sigma)
        np.testing.assert_allclose(stationary_covariance(params), sigma, atol=1e-12)

    def test_scalar_arma11_fixed_point_oracle(self):
        params = scalar_params(phi=0.5, theta=0.3)
        got = stationary_covariance(params)[0, 0]
        want = lyapunov_fixed_point(params)[0, 0]
        assert abs(got - want) < 1e-10
        closed = (1 + 2 * 0.5 * 0.3 + 0.09) / (1 - 0.25)
        assert abs(got - closed) < 1e-12

    def test_matches_long_simulation(self):
        rng = np.random.default_rng(7)
        sp = random_symcomm(rng, 2, phi_max=0.7)
        params = sp.expand()
        gamma = stationary_covariance(params)
        y = simulate(params, 1_000_000, rng)
        emp = (y.T @ y) / y.shape[0]
        rel = np.linalg.norm(emp - gamma) / np.linalg.norm(gamma)
        assert rel < 0.02

    def test_symcomm_closed_form_agrees(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            sp = random_symcomm(rng, 3)
            np.testing.assert_allclose(
                sp.stationary_covariance(),
                stationary_covariance(sp.expand()),
                rtol=1e-10,
                atol=1e-12,
            )


class TestAutocovariance:
    def test_white_noise_lag1_zero(self):
        np.testing.assert_allclose(
            autocovariance(white_noise(2), 1), np.zeros((2, 2)), atol=1e-14
        )

    def test_lag0_agrees_with_stationary(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            params = random_symcomm(rng, int(rng.integers(1, 4))).expand()
            diff = np.linalg.norm(
                autocovariance(params, 0) - stationary_covariance(params)
            )
            assert diff < 1e-8

    def test_scalar_ma1_lag1(self):
        got = autocovariance(scalar_params(theta=0.3), 1)[0, 0]
        assert abs(got - 0.3) < 1e-14

    def test_lag0_symmetric_psd(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            params = random_symcomm(rng, 2).expand()
            g0 = autocovariance(params, 0)
            assert np.allclose(g0, g0.T, atol=1e-10)
            assert np.linalg.eigvalsh(g0).min() > -1e-10
            for h in range(4):
                assert np.all(np.isfinite(autocovariance(params, h)))

    def test_negative_lag_rejected(self):
        with pytest.raises(ValueError):
            autocovariance(white_noise(), -1)


class TestSimulationLaw:
    def test_empirical_lag_covariances(self):
        rng = np.random.default_rng(9)
        for _ in range(2):
            params = random_symcomm(rng, 2, phi_max=0.7).expand()
            y = simulate(params, 1_000_000, rng)
            t_len = y.shape[0]
            emp0 = (y.T @ y) / t_len
            emp1 = (y[1:].T @ y[:-1]) / (t_len - 1)
            g0 = autocovariance(params, 0)
            g1 = autocovariance(params, 1)
            assert np.linalg.norm(emp0 - g0) / np.linalg.norm(g0) < 0.03
            assert np.linalg.norm(emp1 - g1) / np.linalg.norm(g0) < 0.03
