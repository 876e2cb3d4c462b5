"""Zero-mean Gaussian VARMA(p, q) processes.

Parameter containers, validation against stationarity/invertibility and
positive-definiteness, seeded simulation, and stationary/lagged
covariances.  Sample paths are plain ``(T, n)`` float arrays throughout
the package; :func:`as_sample_path` coerces and checks them at entry
points.

All containers are immutable after construction and every operation is
a pure function, so concurrent use is safe as long as random generators
are not shared across threads.
"""

from dataclasses import dataclass, field

import numpy as np

from ._kernels import varma_recursion
from .errors import DimensionError, InvalidModelError, NearUnitRootError

# Stability margin on companion spectral radii and PD margin on the
# innovation covariance; the model conditions are strict inequalities.
EPS_STAB = 1e-9
EPS_PD = 1e-10

# Truncation of the MA(inf) expansion used by `autocovariance`.
MA_INF_MAX_TERMS = 2000
MA_INF_TOL = 1e-14


def as_sample_path(y):
    """Coerce to a (T, n) float64 array and check finiteness."""
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2:
        raise DimensionError(f"sample path must be 2-D (T, n), got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("sample path contains non-finite entries")
    return y


def _as_square(mat, n, name):
    mat = np.asarray(mat, dtype=float)
    if mat.shape != (n, n):
        raise DimensionError(f"{name} must be {n}x{n}, got {mat.shape}")
    return mat


def _freeze(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class VarmaParams:
    """Coefficients (Phi_1..Phi_p, Theta_1..Theta_q, Sigma_eps) of a VARMA(p, q) model."""

    phi: tuple
    theta: tuple
    sigma_eps: np.ndarray

    def __init__(self, phi, theta, sigma_eps):
        sigma_eps = np.asarray(sigma_eps, dtype=float)
        if sigma_eps.ndim != 2 or sigma_eps.shape[0] != sigma_eps.shape[1]:
            raise DimensionError(f"sigma_eps must be square, got {sigma_eps.shape}")
        n = sigma_eps.shape[0]
        phi = tuple(_freeze(_as_square(m, n, "phi")) for m in phi)
        theta = tuple(_freeze(_as_square(m, n, "theta")) for m in theta)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "sigma_eps", _freeze(sigma_eps))

    @property
    def n(self):
        return self.sigma_eps.shape[0]

    @property
    def p(self):
        return len(self.phi)

    @property
    def q(self):
        return len(self.theta)

    def phi_stack(self):
        return np.array(self.phi, dtype=float).reshape(self.p, self.n, self.n)

    def theta_stack(self):
        return np.array(self.theta, dtype=float).reshape(self.q, self.n, self.n)

    def to_dict(self):
        return {
            "p": self.p,
            "q": self.q,
            "n": self.n,
            "phi": [m.tolist() for m in self.phi],
            "theta": [m.tolist() for m in self.theta],
            "sigma_eps": self.sigma_eps.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        params = cls(phi=d["phi"], theta=d["theta"], sigma_eps=d["sigma_eps"])
        for key in ("p", "q", "n"):
            if key in d and d[key] != getattr(params, key):
                raise DimensionError(
                    f"declared {key}={d[key]} inconsistent with matrices ({getattr(params, key)})"
                )
        return params


@dataclass(frozen=True)
class SymCommParams:
    """Simultaneously diagonalizable VARMA(1,1) parameters.

    Theta = theta * I, Phi = P diag(lam_phi) P', Sigma_eps = P diag(lam_sigma) P'
    with orthogonal P.  This family satisfies the symmetric-covariance
    condition the exact-likelihood construction relies on, and its
    eigenvalue ranges keep the expansion stationary and invertible.
    """

    theta: float
    basis: np.ndarray
    lam_phi: np.ndarray
    lam_sigma: np.ndarray

    def __init__(self, theta, basis, lam_phi, lam_sigma):
        basis = np.asarray(basis, dtype=float)
        lam_phi = np.atleast_1d(np.asarray(lam_phi, dtype=float))
        lam_sigma = np.atleast_1d(np.asarray(lam_sigma, dtype=float))
        n = lam_phi.shape[0]
        if basis.shape != (n, n) or lam_sigma.shape != (n,):
            raise DimensionError(
                f"inconsistent shapes: basis {basis.shape}, lam_phi {lam_phi.shape}, "
                f"lam_sigma {lam_sigma.shape}"
            )
        if np.max(np.abs(basis.T @ basis - np.eye(n))) > 1e-8:
            raise InvalidModelError("basis is not orthogonal")
        if abs(theta) > 0.9:
            raise InvalidModelError(f"|theta| = {abs(theta):.4f} exceeds 0.9")
        if np.any(np.abs(lam_phi) >= 0.9):
            raise InvalidModelError("|lam_phi| must be < 0.9 elementwise")
        if np.any(lam_sigma <= 0.1) or np.any(lam_sigma >= 0.9):
            raise InvalidModelError("lam_sigma must lie in (0.1, 0.9) elementwise")
        object.__setattr__(self, "theta", float(theta))
        object.__setattr__(self, "basis", _freeze(basis))
        object.__setattr__(self, "lam_phi", _freeze(lam_phi))
        object.__setattr__(self, "lam_sigma", _freeze(lam_sigma))

    @property
    def n(self):
        return self.lam_phi.shape[0]

    def expand(self):
        p = self.basis
        phi = p @ np.diag(self.lam_phi) @ p.T
        sigma = p @ np.diag(self.lam_sigma) @ p.T
        # Symmetrize to absorb rotation round-off.
        phi = 0.5 * (phi + phi.T)
        sigma = 0.5 * (sigma + sigma.T)
        return VarmaParams(
            phi=[phi], theta=[self.theta * np.eye(self.n)], sigma_eps=sigma
        )

    def stationary_eigvals(self):
        """Eigenvalues of Gamma_Y(0) in the common basis.

        Per component: lam_sigma * (1 + 2*theta*lam_phi + theta^2) / (1 - lam_phi^2).
        """
        th = self.theta
        return self.lam_sigma * (1.0 + 2.0 * th * self.lam_phi + th * th) / (
            1.0 - self.lam_phi**2
        )

    def stationary_covariance(self):
        lam = self.stationary_eigvals()
        g = self.basis @ np.diag(lam) @ self.basis.T
        return 0.5 * (g + g.T)


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    violations: tuple = field(default_factory=tuple)


def ar_companion(params):
    """Companion matrix of the AR lag polynomial (np x np)."""
    return _companion(params.phi, params.n)


def ma_companion(params):
    """Companion matrix of the MA lag polynomial, built from -Theta_i (nq x nq)."""
    return _companion([-m for m in params.theta], params.n)


def _companion(mats, n):
    k = len(mats)
    if k == 0:
        return np.zeros((0, 0))
    c = np.zeros((k * n, k * n))
    for i, m in enumerate(mats):
        c[:n, i * n : (i + 1) * n] = m
    if k > 1:
        c[n:, : (k - 1) * n] = np.eye((k - 1) * n)
    return c


def _spectral_radius(mat):
    if mat.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(mat))))


def validate(params):
    """Check stationarity, invertibility, and innovation-covariance PD.

    Returns a ValidationReport; structural shape errors raise at
    VarmaParams construction instead.
    """
    violations = []
    sig = params.sigma_eps
    if np.max(np.abs(sig - sig.T)) > 1e-10:
        violations.append("sigma_eps is not symmetric")
    else:
        min_eig = float(np.linalg.eigvalsh(sig).min())
        if min_eig <= EPS_PD:
            violations.append(
                f"sigma_eps is not positive definite (min eigenvalue {min_eig:.3e})"
            )
    rho_ar = _spectral_radius(ar_companion(params))
    if rho_ar >= 1.0 - EPS_STAB:
        violations.append(f"AR stationarity violated (spectral radius {rho_ar:.6f})")
    rho_ma = _spectral_radius(ma_companion(params))
    if rho_ma >= 1.0 - EPS_STAB:
        violations.append(f"MA invertibility violated (spectral radius {rho_ma:.6f})")
    return ValidationReport(valid=not violations, violations=tuple(violations))


def require_valid(params):
    report = validate(params)
    if not report.valid:
        raise InvalidModelError("; ".join(report.violations))
    return params


def burn_in_length(params):
    """Steps discarded before the returned sample: 500 + 10*max(p, q)."""
    return 500 + 10 * max(params.p, params.q, 0)


def simulate(params, t_len, rng):
    """Draw a (t_len, n) sample path with Gaussian innovations.

    Deterministic given (params, t_len, seed); a burn-in period is
    simulated from zero initial conditions and discarded.
    """
    require_valid(params)
    if t_len <= 0:
        raise ValueError(f"t_len must be positive, got {t_len}")
    rng = np.random.default_rng(rng)
    burn = burn_in_length(params)
    m = burn + int(t_len)
    chol = np.linalg.cholesky(params.sigma_eps)
    eps = rng.standard_normal((m, params.n)) @ chol.T
    y = varma_recursion(params.phi_stack(), params.theta_stack(), eps)
    return np.ascontiguousarray(y[burn:])


def _augmented_system(params):
    """State-space companion form for the stationary covariance.

    State stacks max(p,1) lags of Y and q lags of eps; returns (P, Sigma_U)
    with state recursion y_t = P y_{t-1} + U_t, Cov(U_t) = Sigma_U.
    """
    n = params.n
    p_eff = max(params.p, 1)
    q = params.q
    k = p_eff + q
    big_p = np.zeros((k * n, k * n))
    for i in range(params.p):
        big_p[:n, i * n : (i + 1) * n] = params.phi[i]
    for j in range(q):
        big_p[:n, (p_eff + j) * n : (p_eff + j + 1) * n] = params.theta[j]
    for i in range(1, p_eff):
        big_p[i * n : (i + 1) * n, (i - 1) * n : i * n] = np.eye(n)
    for j in range(1, q):
        r = (p_eff + j) * n
        c = (p_eff + j - 1) * n
        big_p[r : r + n, c : c + n] = np.eye(n)
    b = np.zeros((k * n, n))
    b[:n] = np.eye(n)
    if q > 0:
        b[p_eff * n : (p_eff + 1) * n] = np.eye(n)
    sigma_u = b @ params.sigma_eps @ b.T
    return big_p, sigma_u


def _augmented_stationary(params):
    big_p, sigma_u = _augmented_system(params)
    k = big_p.shape[0]
    lhs = np.eye(k * k) - np.kron(big_p, big_p)
    try:
        vec_s = np.linalg.solve(lhs, sigma_u.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise NearUnitRootError(
            "stationary covariance system is singular (near unit root)"
        ) from exc
    if not np.all(np.isfinite(vec_s)):
        raise NearUnitRootError(
            "stationary covariance system is ill-conditioned (near unit root)"
        )
    s = vec_s.reshape(k, k)
    return 0.5 * (s + s.T), big_p


def stationary_covariance(params):
    """Gamma_Y(0) as the top-left block of the augmented-state covariance."""
    require_valid(params)
    s, _ = _augmented_stationary(params)
    n = params.n
    return np.ascontiguousarray(s[:n, :n])


def exact_autocovariance(params, h):
    """Gamma_Y(h) from the augmented state: top-left block of P^h S.

    Exact up to the linear solve; used internally where the likelihood
    recursions need lag covariances consistent with `stationary_covariance`.
    """
    require_valid(params)
    if h < 0:
        raise ValueError("lag must be nonnegative")
    s, big_p = _augmented_stationary(params)
    m = s
    for _ in range(int(h)):
        m = big_p @ m
    n = params.n
    return np.ascontiguousarray(m[:n, :n])


def ma_coefficients(params, max_terms=MA_INF_MAX_TERMS, tol=MA_INF_TOL):
    """Coefficients Psi_j of the MA(inf) representation, truncated.

    Psi_0 = I; Psi_j = Theta_j + sum_{i<=min(j,p)} Phi_i Psi_{j-i}.
    Stops after `max_terms` or once ||Psi_j||_F < tol.
    """
    n = params.n
    psis = [np.eye(n)]
    for j in range(1, max_terms + 1):
        psi = params.theta[j - 1].copy() if j <= params.q else np.zeros((n, n))
        for i in range(1, min(j, params.p) + 1):
            psi = psi + params.phi[i - 1] @ psis[j - i]
        psis.append(psi)
        if j > max(params.p, params.q) and np.linalg.norm(psi) < tol:
            break
    return psis


def autocovariance(params, h):
    """Lag-h autocovariance Gamma_Y(h) = sum_j Psi_{j+h} Sigma Psi_j'.

    Computed from the truncated MA(inf) representation; the truncation
    error decays geometrically under the stationarity margin.
    """
    require_valid(params)
    if h < 0:
        raise ValueError("lag must be nonnegative")
    psis = ma_coefficients(params)
    n = params.n
    gam = np.zeros((n, n))
    sig = params.sigma_eps
    for j in range(len(psis) - h):
        gam += psis[j + h] @ sig @ psis[j].T
    return gam
