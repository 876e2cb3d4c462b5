"""Decision methods: PTO, ETO, FPtP, and A-OVE.

Every method reduces to the shared closed-form quadratic solve with a
different effective trading-cost matrix:

* PTO plugs a point forecast into D2;
* ETO fits model parameters by maximum likelihood and uses E[D2];
* FPtP averages D2 over an ensemble of predictions;
* A-OVE averages E[D2 | params] over a discrete prior with posterior
  weights proportional to prior weight times the data likelihood factor
  g1, computed with max-shifted exponentials so that nothing underflows.

A predictor is any object with a ``window`` attribute and a
``predict(window) -> (n,) array`` method that is deterministic after
fitting; :func:`fit_ridge_lag` ships the default linear-in-lags
implementation and :func:`bootstrap_ensemble` resamples it into the
ensemble FPtP needs.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit

from .errors import DimensionError, InsufficientDataError, InvalidModelError
from .likelihood import (
    log_likelihood,
    log_likelihood_symcomm,
    one_step_forecast,
)
from .portfolio import d2_matrix, expected_d2, solve_quadratic
from .varma import SymCommParams, VarmaParams, as_sample_path, stationary_covariance, validate

DEFAULT_WINDOW = 10


# ---------------------------------------------------------------------------
# Predictors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RidgeLagPredictor:
    """Linear map from the flattened lag window to the next observation."""

    window: int
    ridge: float
    coef: np.ndarray  # (window * n, n)

    def predict(self, recent):
        recent = as_sample_path(recent)
        if recent.shape[0] < self.window:
            raise InsufficientDataError(
                f"predictor needs {self.window} recent rows, got {recent.shape[0]}"
            )
        x = recent[-self.window :].reshape(-1)
        if x.shape[0] != self.coef.shape[0]:
            raise DimensionError("window width inconsistent with fitted coefficients")
        return x @ self.coef


def _lag_pairs(y, window):
    t_len = y.shape[0]
    count = t_len - window
    if count < 2:
        raise InsufficientDataError(
            f"need T > window + 1 for training pairs, got T={t_len}, window={window}"
        )
    x = np.stack([y[t - window : t].reshape(-1) for t in range(window, t_len)])
    targets = y[window:]
    return x, targets


def _fit_ridge(x, targets, window, ridge):
    k = x.shape[1]
    gram = x.T @ x + ridge * np.eye(k)
    coef = np.linalg.solve(gram, x.T @ targets)
    return RidgeLagPredictor(window=int(window), ridge=float(ridge), coef=coef)


def fit_ridge_lag(y, window=DEFAULT_WINDOW, ridge=None):
    """Fit the ridge lag predictor on all consecutive (window, next) pairs.

    Default penalty is 1e-3 times the number of training pairs.
    """
    y = as_sample_path(y)
    x, targets = _lag_pairs(y, window)
    if ridge is None:
        ridge = 1e-3 * x.shape[0]
    return _fit_ridge(x, targets, window, ridge)


@dataclass(frozen=True)
class EnsemblePredictor:
    """M fitted predictors with nonnegative weights summing to one."""

    members: tuple
    weights: np.ndarray

    def __init__(self, members, weights=None):
        members = tuple(members)
        if not members:
            raise ValueError("ensemble needs at least one member")
        if weights is None:
            weights = np.full(len(members), 1.0 / len(members))
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (len(members),):
            raise DimensionError("one weight per member required")
        if np.any(weights < 0):
            raise ValueError("ensemble weights must be nonnegative")
        total = weights.sum()
        if abs(total - 1.0) > 1e-12:
            weights = weights / total
        weights.setflags(write=False)
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "weights", weights)

    @property
    def window(self):
        return self.members[0].window

    def predict_all(self, recent):
        return np.stack([m.predict(recent) for m in self.members])

    def predict(self, recent):
        """Weighted-mean prediction, used for accuracy reporting."""
        return self.weights @ self.predict_all(recent)


def bootstrap_ensemble(y, window=DEFAULT_WINDOW, members=25, rng=None, ridge=None, resample=True):
    """Ensemble of ridge predictors fitted on resampled training pairs.

    With resample=False and members=1 this reproduces
    :func:`fit_ridge_lag` exactly.
    """
    y = as_sample_path(y)
    rng = np.random.default_rng(rng)
    x, targets = _lag_pairs(y, window)
    count = x.shape[0]
    if ridge is None:
        ridge = 1e-3 * count
    fitted = []
    for _ in range(members):
        if resample:
            idx = rng.integers(0, count, size=count)
            fitted.append(_fit_ridge(x[idx], targets[idx], window, ridge))
        else:
            fitted.append(_fit_ridge(x, targets, window, ridge))
    return EnsemblePredictor(members=fitted)


@dataclass(frozen=True)
class VarmaForecastPredictor:
    """One-step conditional-mean forecaster for a fitted model."""

    params: VarmaParams
    window: int

    def predict(self, recent):
        recent = as_sample_path(recent)
        if recent.shape[0] < self.window:
            raise InsufficientDataError(
                f"predictor needs {self.window} recent rows, got {recent.shape[0]}"
            )
        return one_step_forecast(recent[-self.window :], self.params)


# ---------------------------------------------------------------------------
# Discrete prior over model parameters
# ---------------------------------------------------------------------------


class DiscretePrior:
    """Weighted atoms {(params_i, u_i)} over the model family.

    Atoms may be SymCommParams (fast likelihood route) or general
    VarmaParams; weights are normalized at construction.  Expected
    trading-cost diagonals are cached per mu2 since the A-OVE hot loop
    reuses them across many sample paths.
    """

    def __init__(self, atoms, weights, check_atoms=True):
        atoms = tuple(atoms)
        if not atoms:
            raise ValueError("prior needs at least one atom")
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (len(atoms),):
            raise DimensionError("one weight per atom required")
        if np.any(weights < 0) or weights.sum() <= 0:
            raise ValueError("weights must be nonnegative with positive sum")
        if check_atoms:
            for atom in atoms:
                if isinstance(atom, SymCommParams):
                    continue  # validated at construction
                report = validate(atom)
                if not report.valid:
                    raise InvalidModelError(
                        "invalid prior atom: " + "; ".join(report.violations)
                    )
        weights = weights / weights.sum()
        weights.setflags(write=False)
        self.atoms = atoms
        self.weights = weights
        self._ed2_cache = {}

    def __len__(self):
        return len(self.atoms)

    @property
    def n(self):
        return self.atoms[0].n

    def expected_d2_diags(self, mu2):
        """(N, n) array of diag(E[D2 | atom_i]) at the given mu2."""
        key = float(mu2)
        cached = self._ed2_cache.get(key)
        if cached is not None:
            return cached
        diags = np.empty((len(self.atoms), self.n))
        for i, atom in enumerate(self.atoms):
            if isinstance(atom, SymCommParams):
                gam = np.diag(atom.stationary_covariance())
            else:
                gam = np.diag(stationary_covariance(atom))
            diags[i] = key * np.exp(0.5 * gam)
        diags.setflags(write=False)
        self._ed2_cache[key] = diags
        return diags


def atom_log_g1(y, atom):
    """log g1(Y, params) along the route matching the atom representation."""
    if isinstance(atom, SymCommParams):
        return log_likelihood_symcomm(y, atom).log_g1
    return log_likelihood(y, atom).log_g1


def aove_posterior_weights(y, prior):
    """Normalized weights w_i proportional to u_i * g1(Y, atom_i).

    Computed entirely in log space with a max shift; raw g1 values are
    never formed.
    """
    y = as_sample_path(y)
    with np.errstate(divide="ignore"):
        log_u = np.log(prior.weights)
    log_w = np.array(
        [
            (log_u[i] + atom_log_g1(y, atom)) if np.isfinite(log_u[i]) else -np.inf
            for i, atom in enumerate(prior.atoms)
        ]
    )
    shift = np.max(log_w)
    if not np.isfinite(shift):
        raise RuntimeError("all posterior weights vanished; prior is degenerate")
    w = np.exp(log_w - shift)
    return w / w.sum()


# ---------------------------------------------------------------------------
# Maximum likelihood over the symmetric-commutative family
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MleConfig:
    restarts: int = 5
    maxiter: int = 2000
    ftol: float = 1e-8
    seed: int = 0
    start_scale: float = 0.5


@dataclass(frozen=True)
class MleResult:
    params: VarmaParams
    symcomm: SymCommParams
    log_g1: float
    log_likelihood: float
    converged: bool
    n_restarts_converged: int


def param_dim(n):
    """Length of the unconstrained coordinate vector for dimension n."""
    return 1 + 2 * n + (n * (n - 1)) // 2


def _skew_from_vec(s, n):
    a = np.zeros((n, n))
    iu = np.triu_indices(n, k=1)
    a[iu] = s
    return a - a.T


def _vec_from_skew(a):
    iu = np.triu_indices(a.shape[0], k=1)
    return a[iu]


def _cayley(a):
    n = a.shape[0]
    return np.linalg.solve((np.eye(n) + a).T, (np.eye(n) - a).T).T


def _inverse_cayley(p):
    n = p.shape[0]
    return np.linalg.solve((np.eye(n) + p).T, (np.eye(n) - p).T).T


def unconstrained_to_symcomm(z, n):
    """Map free coordinates to valid parameters.

    theta = 0.9*tanh(a), lam_phi = 0.9*tanh(b), lam_sigma = 0.1 + 0.8*
    sigmoid(c), and the basis is the Cayley transform of a skew matrix,
    so the admissible ranges hold by construction.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (param_dim(n),):
        raise DimensionError(f"expected {param_dim(n)} coordinates, got {z.shape}")
    # tanh/expit saturate in floating point; nudge strictly inside the
    # open ranges so extreme line-search points stay admissible.
    tiny = 1e-12
    theta = 0.9 * np.tanh(z[0])
    lam_phi = np.clip(0.9 * np.tanh(z[1 : 1 + n]), -0.9 + tiny, 0.9 - tiny)
    lam_sigma = np.clip(
        0.1 + 0.8 * expit(z[1 + n : 1 + 2 * n]), 0.1 + tiny, 0.9 - tiny
    )
    basis = _cayley(_skew_from_vec(z[1 + 2 * n :], n)) if n > 1 else np.eye(1)
    return SymCommParams(theta=theta, basis=basis, lam_phi=lam_phi, lam_sigma=lam_sigma)


def symcomm_to_unconstrained(params):
    """Inverse of :func:`unconstrained_to_symcomm` (clipping at range edges)."""
    eps = 1e-12
    a = np.arctanh(np.clip(params.theta / 0.9, -1 + eps, 1 - eps))
    b = np.arctanh(np.clip(params.lam_phi / 0.9, -1 + eps, 1 - eps))
    c = logit(np.clip((params.lam_sigma - 0.1) / 0.8, eps, 1 - eps))
    if params.n > 1:
        s = _vec_from_skew(_inverse_cayley(params.basis))
    else:
        s = np.zeros(0)
    return np.concatenate([[a], b, c, s])


def mle(y, config=None):
    """Maximize the likelihood over the symmetric-commutative family.

    Deterministic quasi-Newton optimization with finite-difference
    gradients and a fixed set of restart points; non-convergence is
    flagged on the result, never silent.
    """
    y = as_sample_path(y)
    if y.shape[0] <= 2:
        raise InsufficientDataError("need T > 2 for estimation")
    config = config or MleConfig()
    n = y.shape[1]
    dim = param_dim(n)

    def objective(z):
        return -log_likelihood_symcomm(y, unconstrained_to_symcomm(z, n)).log_g1

    best = None
    best_idx = -1
    n_converged = 0
    for r in range(config.restarts):
        if r == 0:
            z0 = np.zeros(dim)
        else:
            rng = np.random.default_rng([config.seed, r])
            z0 = rng.normal(scale=config.start_scale, size=dim)
        res = minimize(
            objective,
            z0,
            method="L-BFGS-B",
            options={"maxiter": config.maxiter, "ftol": config.ftol},
        )
        if res.success:
            n_converged += 1
        if best is None or res.fun < best.fun:
            best = res
            best_idx = r
    sym = unconstrained_to_symcomm(best.x, n)
    parts = log_likelihood_symcomm(y, sym)
    return MleResult(
        params=sym.expand(),
        symcomm=sym,
        log_g1=parts.log_g1,
        log_likelihood=parts.total,
        converged=bool(best.success),
        n_restarts_converged=n_converged,
    )


# ---------------------------------------------------------------------------
# Decision methods
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EtoResult:
    x: np.ndarray
    mle: MleResult


def solve_pto(y, predictor, spec):
    """Point-forecast decision: x = argmin pi(x, Y_hat)."""
    y = as_sample_path(y)
    forecast = predictor.predict(y)
    return solve_quadratic(d2_matrix(forecast, spec.mu2), spec)


def solve_eto(y, spec, mle_config=None):
    """Estimate parameters by MLE, then minimize the model-expected cost."""
    fit = mle(y, mle_config)
    x = solve_quadratic(expected_d2(fit.symcomm, spec.mu2), spec)
    return EtoResult(x=x, mle=fit)


def solve_fptp(y, ensemble, spec):
    """Ensemble decision: D2_eff = sum_m w_m D2(Y_hat_m)."""
    y = as_sample_path(y)
    preds = ensemble.predict_all(y)
    d2_eff = np.zeros((spec.n, spec.n))
    for w, pred in zip(ensemble.weights, preds):
        d2_eff += w * d2_matrix(pred, spec.mu2)
    return solve_quadratic(d2_eff, spec)


def solve_aove(y, prior, spec):
    """Posterior-weighted decision over the prior atoms.

    Equivalent to the closed form with unnormalized posterior factors:
    dividing numerator and denominator by the likelihood normalizer
    leaves the minimizer unchanged, so normalized weights are used.
    """
    w = aove_posterior_weights(y, prior)
    diags = prior.expected_d2_diags(spec.mu2)
    d2_eff = np.diag(w @ diags)
    return solve_quadratic(d2_eff, spec)
