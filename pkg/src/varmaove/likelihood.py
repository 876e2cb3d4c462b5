"""Exact VARMA likelihood via a forward-transformed innovation recursion.

The observed series is re-expressed through a unit-Jacobian linear map
(AR differences running forward in time), the transformed series is
filtered with the multivariate innovations algorithm, and the Gaussian
log-density splits into a parameter-free part ``log_g0`` and a
parameter-dependent part ``log_g1``.

Three routes compute the same value on their common domain:

* :func:`log_likelihood` - general (p, q) via the banded covariance of
  the transformed series;
* :func:`log_likelihood_varma11` - VARMA(1,1) closed-form recursion in
  terms of alpha/beta auxiliary series;
* :func:`log_likelihood_symcomm` - the simultaneously-diagonalizable
  family, reduced to scalar recursions in the common eigenbasis.

All functions are pure; evaluating many (Y, params) pairs concurrently
is safe.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from ._kernels import symcomm_filter
from .errors import DegenerateModelError, DimensionError, InsufficientDataError
from .varma import (
    SymCommParams,
    _augmented_stationary,
    as_sample_path,
    require_valid,
    stationary_covariance,
)

# Diagonal jitter added once if a prediction-error covariance fails to
# factor: 1e-10 * trace / n.
JITTER_SCALE = 1e-10


@dataclass(frozen=True)
class ForwardSeries:
    """Forward-transformed observations W and the cutoff l = max(p, q)."""

    w: np.ndarray
    l: int


@dataclass(frozen=True)
class InnovationSequence:
    """Output of the innovations recursion on the transformed series.

    theta_coeffs[t-1][j-1] holds the coefficient applied to the lag-j
    residual when predicting step t+1; rows are truncated at the
    covariance band of the transformed series, beyond which every
    coefficient is exactly zero.  sigma_t stacks the (jittered,
    symmetric PD) prediction-error covariances; predictors and
    residuals are the one-step means and innovations of W.
    """

    theta_coeffs: tuple
    sigma_t: np.ndarray
    residuals: np.ndarray
    predictors: np.ndarray
    sigma_chol: tuple


@dataclass(frozen=True)
class LogLikelihoodParts:
    log_g0: float
    log_g1: float

    @property
    def total(self):
        return self.log_g0 + self.log_g1


def _check_series(y, params):
    y = as_sample_path(y)
    if y.shape[1] != params.n:
        raise DimensionError(
            f"series has {y.shape[1]} components but params expect {params.n}"
        )
    return y


def forward_transform(y, params):
    """W_t = Y_t - sum_i Phi_i Y_{t+i} for t <= T-l, W_t = Y_t afterwards.

    The map Y -> W is block unit-triangular, so it has unit Jacobian and
    W carries the same probabilistic information as Y.
    """
    require_valid(params)
    y = _check_series(y, params)
    t_len = y.shape[0]
    l = max(params.p, params.q)
    if t_len <= l:
        raise InsufficientDataError(f"need T > max(p, q) = {l}, got T = {t_len}")
    w = y.copy()
    for i, phi in enumerate(params.phi, start=1):
        w[: t_len - l] -= y[i : t_len - l + i] @ phi.T
    return ForwardSeries(w=w, l=l)


class _ExactLags:
    """Lag covariances Gamma_Y(h) from the augmented state, cached by lag."""

    def __init__(self, params):
        s, big_p = _augmented_stationary(params)
        self._powers = [s]
        self._big_p = big_p
        self._n = params.n

    def __call__(self, h):
        while len(self._powers) <= h:
            self._powers.append(self._big_p @ self._powers[-1])
        return self._powers[h][: self._n, : self._n]


class GammaW:
    """Covariance function Gamma_W(t, s) of the forward-transformed series.

    Cases follow the partition of (t, s) by which side of the cutoff
    each index falls on:

    * both past the cutoff (raw tail): Gamma_Y(h);
    * t past, s before (mixed): Gamma_Y(h) - sum_i Phi_i Gamma_Y(h - i);
    * both before the cutoff: the MA band sum_{i<=q-h} Theta_i Sigma
      Theta_{i+h}' (Theta_0 = I), zero for h > q.

    Indices are 1-based and require t >= s.
    """

    def __init__(self, params, t_len):
        require_valid(params)
        self.params = params
        self.t_len = int(t_len)
        self.l = max(params.p, params.q)
        # Gamma_W(t, s) vanishes for t - s > band: interior entries are the
        # MA band (h <= q), tail entries need h < l, and mixed entries with
        # h > q are zero through the autocovariance recursion.
        self.band = max(params.q, self.l - 1)
        self._gamma = _ExactLags(params)

    def gamma_y(self, h):
        """Gamma_Y(h) for any integer lag; negative lags transpose."""
        if h >= 0:
            return self._gamma(h)
        return self._gamma(-h).T

    def __call__(self, t, s):
        if not (1 <= s <= t <= self.t_len):
            raise ValueError(f"need 1 <= s <= t <= T, got t={t}, s={s}")
        h = t - s
        cutoff = self.t_len - self.l
        params = self.params
        n = params.n
        if s > cutoff:
            return self.gamma_y(h)
        if t > cutoff:
            out = self.gamma_y(h).copy()
            for i, phi in enumerate(params.phi, start=1):
                out -= phi @ self.gamma_y(h - i)
            return out
        if h > params.q:
            return np.zeros((n, n))
        sig = params.sigma_eps
        out = np.zeros((n, n))
        for i in range(params.q - h + 1):
            left = sig if i == 0 else params.theta[i - 1] @ sig
            out += left if i + h == 0 else left @ params.theta[i + h - 1].T
        return out


def gamma_w(params, t_len):
    """Block autocovariance function of the forward-transformed series."""
    return GammaW(params, t_len)


def _chol_with_jitter(mat, t):
    mat = 0.5 * (mat + mat.T)
    try:
        return np.linalg.cholesky(mat), mat
    except np.linalg.LinAlgError:
        pass
    n = mat.shape[0]
    jittered = mat + (JITTER_SCALE * np.trace(mat) / n) * np.eye(n)
    try:
        return np.linalg.cholesky(jittered), jittered
    except np.linalg.LinAlgError:
        raise DegenerateModelError(t) from None


def _innovation_coefficients(kfun, t_len, band=None):
    """Innovations recursion against a generic covariance kernel.

    kfun(i, j) must return Cov(X_i, X_j) for 1 <= j <= i <= t_len as
    needed; returns per-row coefficient lists, covariances, and their
    Cholesky factors.  Row t (1-based) predicts step t+1.

    When the kernel vanishes for |i - j| > band, the coefficients beyond
    the band are exactly zero; passing `band` skips them, making the
    recursion linear in t_len.  Row t then holds min(t, band) entries.
    """
    if band is None:
        band = t_len
    chol1, sig1 = _chol_with_jitter(kfun(1, 1), 1)
    sigmas = [sig1]
    chols = [chol1]
    thetas = []
    for t in range(1, t_len):
        width = min(t, band)
        row = [None] * width
        for j in range(width, 0, -1):
            acc = kfun(t + 1, t - j + 1).copy()
            for k in range(max(0, t - band), t - j):
                prev = thetas[t - j - 1]
                if t - j - k > len(prev):
                    continue
                acc -= row[t - k - 1] @ sigmas[k] @ prev[t - j - k - 1].T
            # right-multiply by Sigma_{t-j+1}^{-1} via its Cholesky factor
            row[j - 1] = cho_solve((chols[t - j], True), acc.T).T
        thetas.append(row)
        nxt = kfun(t + 1, t + 1).copy()
        for j in range(1, width + 1):
            nxt -= row[j - 1] @ sigmas[t - j] @ row[j - 1].T
        chol, nxt = _chol_with_jitter(nxt, t + 1)
        sigmas.append(nxt)
        chols.append(chol)
    return thetas, sigmas, chols


def _filter_series(thetas, series):
    """One-step predictors and residuals given innovation coefficients."""
    t_len, n = series.shape
    predictors = np.zeros((t_len, n))
    residuals = np.zeros((t_len, n))
    residuals[0] = series[0]
    for t in range(2, t_len + 1):
        row = thetas[t - 2]
        pred = np.zeros(n)
        for j in range(1, len(row) + 1):
            pred += row[j - 1] @ residuals[t - j - 1]
        predictors[t - 1] = pred
        residuals[t - 1] = series[t - 1] - pred
    return predictors, residuals


def innovations(y, params):
    """Innovation coefficients, covariances, predictors, and residuals of W."""
    fw = forward_transform(y, params)
    t_len = fw.w.shape[0]
    kernel = gamma_w(params, t_len)
    thetas, sigmas, chols = _innovation_coefficients(kernel, t_len, band=kernel.band)
    predictors, residuals = _filter_series(thetas, fw.w)
    return InnovationSequence(
        theta_coeffs=tuple(tuple(row) for row in thetas),
        sigma_t=np.array(sigmas),
        residuals=residuals,
        predictors=predictors,
        sigma_chol=tuple(chols),
    )


def _gauss_parts(residuals, chols, n, t_len):
    logdet = 0.0
    quad = 0.0
    for t in range(t_len):
        chol = chols[t]
        logdet += 2.0 * float(np.sum(np.log(np.diag(chol))))
        z = np.linalg.solve(chol, residuals[t])
        quad += float(z @ z)
    log_g0 = -0.5 * n * t_len * np.log(2.0 * np.pi)
    log_g1 = -0.5 * logdet - 0.5 * quad
    return LogLikelihoodParts(log_g0=float(log_g0), log_g1=float(log_g1))


def log_likelihood(y, params):
    """Exact Gaussian log-density of Y split as (log_g0, log_g1).

    log_g0 = -(nT/2) log 2*pi; log_g1 = -1/2 sum log det Sigma_t
    - 1/2 sum r_t' Sigma_t^{-1} r_t over the transformed series.
    """
    y = _check_series(y, params)
    inn = innovations(y, params)
    t_len, n = y.shape
    return _gauss_parts(inn.residuals, inn.sigma_chol, n, t_len)


def log_likelihood_varma11(y, params):
    """VARMA(1,1) likelihood through the closed-form recursion.

    Identical in value to :func:`log_likelihood`; implemented via the
    alpha/beta auxiliary series and the signed products
    C_{j,t} = (-1)^j Theta_{t-1,1} ... Theta_{t-j-1,1}.
    """
    require_valid(params)
    if params.p != 1 or params.q != 1:
        raise ValueError(f"requires p = q = 1, got ({params.p}, {params.q})")
    y = _check_series(y, params)
    t_len, n = y.shape
    if t_len <= 1:
        raise InsufficientDataError("need T > 1 for VARMA(1,1)")
    phi = params.phi[0]
    theta = params.theta[0]
    sig = params.sigma_eps
    gamma0 = stationary_covariance(params)
    ma_cov = theta @ sig @ theta.T + sig

    # 1-indexed containers; index 0 unused.
    sigmas = [None] * (t_len + 1)
    chols = [None] * (t_len + 1)
    th1 = [None] * t_len  # Theta_{t,1} for t in [1, T-1]
    sigmas[1] = ma_cov
    chols[1], sigmas[1] = _chol_with_jitter(sigmas[1], 1)
    for t in range(1, t_len):
        th1[t] = cho_solve((chols[t], True), (sig @ theta.T).T).T
        if t + 1 < t_len:
            nxt = ma_cov - th1[t] @ sigmas[t] @ th1[t].T
        else:
            nxt = gamma0 - th1[t] @ sigmas[t] @ th1[t].T
        chols[t + 1], sigmas[t + 1] = _chol_with_jitter(nxt, t + 1)

    alpha = np.zeros((t_len + 1, n))
    alpha[1] = y[0]
    for t in range(2, t_len + 1):
        alpha[t] = y[t - 1] - th1[t - 1] @ alpha[t - 1]
    beta = {t: y[t] for t in range(1, t_len)}  # beta_t = Y_{t+1}

    def c_terms(t):
        """C_{j,t} Phi beta_{t-1-j} summed over j = 0..t-2."""
        acc = np.zeros(n)
        c = None
        for j in range(t - 1):
            c = th1[t - 1] if j == 0 else -c @ th1[t - 1 - j]
            acc += c @ (phi @ beta[t - 1 - j])
        return acc

    residuals = np.zeros((t_len + 1, n))
    residuals[1] = alpha[1] - phi @ beta[1]
    for t in range(2, t_len):
        residuals[t] = alpha[t] - phi @ beta[t] + c_terms(t)
    if t_len >= 2:
        tail = np.zeros(n)
        if t_len >= 3:
            tail = c_terms(t_len - 1)
        residuals[t_len] = alpha[t_len] + th1[t_len - 1] @ (phi @ beta[t_len - 1]) - th1[
            t_len - 1
        ] @ tail

    return _gauss_parts(residuals[1:], chols[1:], n, t_len)


def log_likelihood_symcomm(y, params):
    """Likelihood of a simultaneously diagonalizable VARMA(1,1) model.

    Rotates the series into the common eigenbasis where every
    prediction-error covariance is diagonal and the recursion collapses
    to scalars; equals the general path on this family.
    """
    if not isinstance(params, SymCommParams):
        raise TypeError("params must be SymCommParams")
    y = as_sample_path(y)
    if y.shape[1] != params.n:
        raise DimensionError(
            f"series has {y.shape[1]} components but params expect {params.n}"
        )
    t_len, n = y.shape
    if t_len <= 1:
        raise InsufficientDataError("need T > 1 for VARMA(1,1)")
    ytil = np.ascontiguousarray(y @ params.basis)
    logdet, quad = symcomm_filter(
        ytil,
        params.theta,
        np.ascontiguousarray(params.lam_phi),
        np.ascontiguousarray(params.lam_sigma),
        np.ascontiguousarray(params.stationary_eigvals()),
    )
    log_g0 = -0.5 * n * t_len * np.log(2.0 * np.pi)
    return LogLikelihoodParts(log_g0=float(log_g0), log_g1=float(-0.5 * (logdet + quad)))


def one_step_forecast(y, params):
    """Conditional mean E[Y_{T+1} | Y_1..Y_T] via the innovations recursion.

    Runs the same coefficient recursion as the likelihood but against
    the raw-series covariances, then extrapolates one step.
    """
    require_valid(params)
    y = _check_series(y, params)
    t_len = y.shape[0]
    lags = _ExactLags(params)

    def kfun(i, j):
        h = i - j
        return lags(h) if h >= 0 else lags(-h).T

    thetas, _, _ = _innovation_coefficients(kfun, t_len + 1)
    _, residuals = _filter_series(thetas[: t_len - 1], y)
    row = thetas[t_len - 1]
    pred = np.zeros(params.n)
    for j in range(1, t_len + 1):
        pred += row[j - 1] @ residuals[t_len - j]
    return pred
