"""Synthetic regret benchmark.

Draws oracle parameters from a softmin-of-distance discrete prior
centered at a fixed reference, simulates sample paths per oracle, lets
each decision method act on every path, and scores the decisions by
relative regret against the perfect-information optimum under the true
oracle parameters.  A mis-specified variant generates the data from a
higher-order model family while the decision methods keep assuming
order (1, 1).

Per-oracle and per-path random streams are derived from (master seed,
stream tag, oracle index, path index), so results are independent of
scheduling and worker count.
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, InsufficientDataError
from .methods import (
    DEFAULT_WINDOW,
    DiscretePrior,
    MleConfig,
    VarmaForecastPredictor,
    bootstrap_ensemble,
    fit_ridge_lag,
    mle,
    param_dim,
    solve_aove,
    solve_eto,
    solve_fptp,
    solve_pto,
    symcomm_to_unconstrained,
    unconstrained_to_symcomm,
)
from .portfolio import PortfolioSpec, expected_cost_rho, expected_d2, solve_quadratic
from .varma import SymCommParams, VarmaParams, as_sample_path, simulate, validate

DEFAULT_METHODS = ("aove", "eto", "pto", "fptp")

# Stream tags for named substreams of the master seed.
_S_SPEC = 0
_S_PRIOR = 1
_S_DRAW = 2
_S_PATH = 3
_S_FPTP = 4
_S_MSE = 5
_S_MISFIT = 6

# Benchmark configuration defaults per problem size (well-specified
# rows; the mis-specified row adds N_sove = 5).
TABLE_DEFAULTS = {
    2: dict(n_t=10_000, n_o=50, n_ove=500, n_s=200, t_len=25),
    5: dict(n_t=10_000, n_o=50, n_ove=1000, n_s=200, t_len=25),
    10: dict(n_t=10_000, n_o=50, n_ove=1000, n_s=200, t_len=25),
}

CANDIDATE_SCALE = 0.25
MAX_REJECTIONS = 100


@dataclass(frozen=True)
class SyntheticConfig:
    """Counts and orders for a synthetic run.

    n_t candidates form the prior pool; n_o oracles and n_ove posterior
    atoms are drawn from it disjointly; n_s paths of length t_len are
    simulated per oracle.  n_sove is only used by the mis-specified
    pipeline (model fits per oracle).
    """

    n: int
    n_t: int = 10_000
    n_o: int = 50
    n_ove: int = 500
    n_s: int = 200
    t_len: int = 25
    n_sove: int = 5
    oracle_order: tuple = (1, 1)
    seed: int = 0
    window: int = DEFAULT_WINDOW
    fptp_members: int = 25
    compute_mse: bool = True

    def __post_init__(self):
        counts = {
            "n": self.n,
            "n_t": self.n_t,
            "n_o": self.n_o,
            "n_ove": self.n_ove,
            "n_s": self.n_s,
            "t_len": self.t_len,
            "n_sove": self.n_sove,
        }
        bad = [k for k, v in counts.items() if v <= 0]
        if bad:
            raise ConfigError(f"counts must be positive: {bad}")
        if self.n_o > self.n_t:
            raise ConfigError(f"n_o ({self.n_o}) cannot exceed n_t ({self.n_t})")
        if self.n_o + self.n_ove > self.n_t:
            raise ConfigError(
                "n_o + n_ove must not exceed n_t (oracle and posterior draws are disjoint)"
            )
        p, q = self.oracle_order
        if p < 1 or q < 1:
            raise ConfigError(f"oracle order must have p, q >= 1, got {self.oracle_order}")

    @classmethod
    def table_default(cls, n, **overrides):
        base = TABLE_DEFAULTS.get(n, TABLE_DEFAULTS[2]).copy()
        base.update(overrides)
        return cls(n=n, **base)

    def to_dict(self):
        return {
            "n": self.n,
            "N_t": self.n_t,
            "N_o": self.n_o,
            "N_ove": self.n_ove,
            "N_s": self.n_s,
            "T": self.t_len,
            "N_sove": self.n_sove,
            "oracle_order": list(self.oracle_order),
            "seed": self.seed,
            "window": self.window,
            "fptp_members": self.fptp_members,
            "compute_mse": self.compute_mse,
        }

    @classmethod
    def from_dict(cls, d):
        alias = {
            "N_t": "n_t",
            "N_o": "n_o",
            "N_ove": "n_ove",
            "N_s": "n_s",
            "T": "t_len",
            "N_sove": "n_sove",
        }
        kwargs = {}
        for key, value in d.items():
            name = alias.get(key, key)
            if name == "oracle_order":
                value = tuple(value)
            kwargs[name] = value
        unknown = set(kwargs) - {f.name for f in cls.__dataclass_fields__.values()}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "n" not in kwargs:
            raise ConfigError("config requires 'n'")
        return cls(**kwargs)


@dataclass
class RegretReport:
    """Per-method regret, accuracy, and timing for one evaluation run."""

    methods: tuple
    mean_regret: dict
    per_oracle_regret: dict
    mse: dict
    seconds: dict
    failures: dict
    n_oracles: int
    n_paths: int
    config: dict = field(default_factory=dict)

    def rows(self):
        """Flat (method, oracle_index, mean_regret, mse, seconds) rows."""
        out = []
        for m in self.methods:
            per = self.per_oracle_regret[m]
            per_mse = self.mse.get(f"_per_oracle:{m}")
            for o in range(self.n_oracles):
                mse_val = per_mse[o] if per_mse is not None else float("nan")
                out.append((m, o, float(per[o]), float(mse_val), self.seconds[m] / self.n_oracles))
        return out

    def summary_lines(self):
        out = [f"{'method':<8} {'time_s':>10} {'mse':>12} {'regret_pct':>12}"]
        for m in self.methods:
            mse = self.mse.get(m, float("nan"))
            mse_txt = f"{mse:12.4f}" if np.isfinite(mse) else f"{'-':>12}"
            out.append(
                f"{m:<8} {self.seconds[m]:10.2f} {mse_txt} {100.0 * self.mean_regret[m]:12.4f}"
            )
        return out


# ---------------------------------------------------------------------------
# Reference parameters and candidate sampling
# ---------------------------------------------------------------------------


def _spread(lo, hi, n):
    if n == 1:
        return np.array([(lo + hi) / 2.0])
    return np.linspace(lo, hi, n)


def make_reference(n):
    """Mid-range, well-conditioned reference parameters for dimension n."""
    return SymCommParams(
        theta=0.4,
        basis=np.eye(n),
        lam_phi=_spread(-0.5, 0.5, n),
        lam_sigma=_spread(0.3, 0.7, n),
    )


def sample_candidate(reference, rng, scale=CANDIDATE_SCALE):
    """Gaussian perturbation of the reference in unconstrained coordinates.

    The coordinate maps enforce the admissible ranges, so candidates are
    valid by construction; a bounded rejection loop re-draws in the
    (unreachable in this family) event of an invalid expansion.
    """
    rng = np.random.default_rng(rng)
    z_ref = symcomm_to_unconstrained(reference)
    for _ in range(MAX_REJECTIONS):
        z = z_ref + rng.normal(scale=scale, size=z_ref.shape[0])
        cand = unconstrained_to_symcomm(z, reference.n)
        if validate(cand.expand()).valid:
            return cand
    raise RuntimeError("candidate sampling exceeded the rejection cap")


def _softmin_weights(distances):
    d = np.asarray(distances, dtype=float)
    w = np.exp(-(d - d.min()))
    return w / w.sum()


def _distance_11(cand, ref_mats):
    theta0, phi0, sigma0 = ref_mats
    mats = cand.expand()
    return (
        np.sum((mats.theta[0] - theta0) ** 2)
        + np.sum((mats.phi[0] - phi0) ** 2)
        + np.sum((mats.sigma_eps - sigma0) ** 2)
    )


def build_prior(reference, n_t, rng):
    """n_t candidates near the reference, weighted by softmin of the
    squared Frobenius distance between parameter matrices."""
    rng = np.random.default_rng(rng)
    ref_mats_obj = reference.expand()
    ref_mats = (ref_mats_obj.theta[0], ref_mats_obj.phi[0], ref_mats_obj.sigma_eps)
    atoms = [sample_candidate(reference, rng) for _ in range(n_t)]
    dists = [_distance_11(a, ref_mats) for a in atoms]
    return DiscretePrior(atoms, _softmin_weights(dists), check_atoms=False)


@dataclass(frozen=True)
class HigherOrderSymComm:
    """Simultaneously diagonalizable VARMA(p, q): Theta_i = theta_i * I,
    Phi_i = P diag(lam_phi[i]) P', shared orthogonal P."""

    thetas: np.ndarray  # (q,)
    basis: np.ndarray
    lam_phi: np.ndarray  # (p, n)
    lam_sigma: np.ndarray  # (n,)

    @property
    def n(self):
        return self.lam_sigma.shape[0]

    def expand(self):
        p_mat = self.basis
        phis = []
        for row in self.lam_phi:
            m = p_mat @ np.diag(row) @ p_mat.T
            phis.append(0.5 * (m + m.T))
        sigma = p_mat @ np.diag(self.lam_sigma) @ p_mat.T
        return VarmaParams(
            phi=phis,
            theta=[th * np.eye(self.n) for th in self.thetas],
            sigma_eps=0.5 * (sigma + sigma.T),
        )


def make_reference_pq(n, p, q):
    """Higher-order reference: lag-i coefficients damped by 2^(1-i)."""
    lam_phi = np.stack([_spread(-0.5, 0.5, n) * 0.5 ** i for i in range(p)])
    thetas = np.array([0.4 * 0.5 ** i for i in range(q)])
    ref = HigherOrderSymComm(
        thetas=thetas,
        basis=np.eye(n),
        lam_phi=lam_phi,
        lam_sigma=_spread(0.3, 0.7, n),
    )
    if not validate(ref.expand()).valid:
        raise ConfigError(f"reference for order ({p}, {q}) is not stationary/invertible")
    return ref


def _pq_coords(ref):
    eps = 1e-12
    a = np.arctanh(np.clip(ref.thetas / 0.9, -1 + eps, 1 - eps))
    b = np.arctanh(np.clip(ref.lam_phi / 0.9, -1 + eps, 1 - eps)).reshape(-1)
    from scipy.special import logit

    c = logit(np.clip((ref.lam_sigma - 0.1) / 0.8, eps, 1 - eps))
    return np.concatenate([a, b, c, np.zeros((ref.n * (ref.n - 1)) // 2)])


def sample_candidate_pq(reference, rng, scale=CANDIDATE_SCALE):
    """Higher-order analogue of :func:`sample_candidate`.

    Per-lag eigenvalue ranges hold by construction, but stacked lags can
    push the companion matrices toward a unit root even when every lag
    is individually tame.  Draws are rejected (capped loop) unless both
    companion spectral radii stay below 0.9 - the same effective bound
    the order-(1,1) eigenvalue ranges impose.
    """
    from scipy.special import expit

    from .methods import _cayley, _skew_from_vec
    from .varma import ar_companion, ma_companion, _spectral_radius

    rng = np.random.default_rng(rng)
    n = reference.n
    p = reference.lam_phi.shape[0]
    q = reference.thetas.shape[0]
    z_ref = _pq_coords(reference)
    for _ in range(MAX_REJECTIONS):
        z = z_ref + rng.normal(scale=scale, size=z_ref.shape[0])
        thetas = 0.9 * np.tanh(z[:q])
        lam_phi = 0.9 * np.tanh(z[q : q + p * n]).reshape(p, n)
        lam_sigma = 0.1 + 0.8 * expit(z[q + p * n : q + p * n + n])
        skew = z[q + p * n + n :]
        basis = _cayley(_skew_from_vec(skew, n)) if n > 1 else np.eye(1)
        cand = HigherOrderSymComm(
            thetas=thetas, basis=basis, lam_phi=lam_phi, lam_sigma=lam_sigma
        )
        expanded = cand.expand()
        if not validate(expanded).valid:
            continue
        if _spectral_radius(ar_companion(expanded)) >= 0.9:
            continue
        if _spectral_radius(ma_companion(expanded)) >= 0.9:
            continue
        return cand
    raise RuntimeError("candidate sampling exceeded the rejection cap")


def _distance_pq(cand, ref):
    """Lag-matched squared Frobenius distance between expansions."""
    cm = cand.expand()
    rm = ref.expand()
    d = float(np.sum((cm.sigma_eps - rm.sigma_eps) ** 2))
    for a, b in zip(cm.theta, rm.theta):
        d += float(np.sum((a - b) ** 2))
    for a, b in zip(cm.phi, rm.phi):
        d += float(np.sum((a - b) ** 2))
    return d


def build_prior_pq(reference, n_t, rng):
    """Candidate pool for the higher-order oracle family.

    Returns (atoms as HigherOrderSymComm, weights); atoms are kept
    unexpanded so the mis-specified pipeline can re-simulate from them.
    """
    rng = np.random.default_rng(rng)
    atoms = [sample_candidate_pq(reference, rng) for _ in range(n_t)]
    dists = [_distance_pq(a, reference) for a in atoms]
    return atoms, _softmin_weights(dists)


# ---------------------------------------------------------------------------
# Rolling one-step accuracy
# ---------------------------------------------------------------------------


def rolling_mse(y, predictor_factory, window=DEFAULT_WINDOW):
    """Mean squared one-step error norm over the tail of the path.

    The factory is fitted once on the first 60% of the path (at least
    window + 2 rows) and evaluated without refitting on the remainder;
    each term is the squared Euclidean norm of the forecast error, so a
    zero predictor on unit-variance white noise scores n.
    """
    y = as_sample_path(y)
    t_len = y.shape[0]
    split = max(int(0.6 * t_len), window + 2)
    if split >= t_len:
        raise InsufficientDataError(
            f"need T > max(0.6T, window + 2) evaluation rows, got T={t_len}"
        )
    predictor = predictor_factory(y[:split])
    errors = []
    for t in range(split, t_len):
        pred = predictor.predict(y[t - window : t])
        errors.append(float(np.sum((pred - y[t]) ** 2)))
    return float(np.mean(errors))


# ---------------------------------------------------------------------------
# Evaluation core (shared by well-specified and mis-specified runs)
# ---------------------------------------------------------------------------


def _draw_portfolio_spec(n, rng):
    """Synthetic problem constants: A=1, gamma=0.1, delta^2=0.1, mu2=0.1,
    x0 ~ U(0,1)^n, e ~ U(0.05, 0.15)^n."""
    a_fund, gamma, delta2, mu2 = 1.0, 0.1, 0.1, 0.1
    x0 = rng.uniform(0.0, 1.0, n)
    e = rng.uniform(0.05, 0.15, n)
    return PortfolioSpec(
        mu0=a_fund / (gamma * delta2),
        mu1=gamma * delta2 / (2 * a_fund),
        mu2=mu2,
        e=e,
        x0=x0,
    )


@dataclass(frozen=True)
class _OracleTask:
    config: SyntheticConfig
    oracle_index: int
    truth: object  # SymCommParams | VarmaParams
    prior: DiscretePrior
    spec: PortfolioSpec
    methods: tuple


def _predictor_window(config):
    # Keep lag windows feasible on short paths (fit needs window + 2 rows).
    return min(config.window, max(1, config.t_len - 3))


def _evaluate_oracle(task):
    cfg = task.config
    spec = task.spec
    truth = task.truth
    o = task.oracle_index
    window = _predictor_window(cfg)
    mle_cfg = MleConfig(seed=cfg.seed)

    x_star = solve_quadratic(expected_d2(truth, spec.mu2), spec)
    rho_star = expected_cost_rho(x_star, truth, spec)

    regrets = {m: [] for m in task.methods}
    mses = {m: [] for m in task.methods}
    seconds = dict.fromkeys(task.methods, 0.0)
    failures = dict.fromkeys(task.methods, 0)

    for i in range(cfg.n_s):
        y = simulate(
            truth if isinstance(truth, VarmaParams) else truth.expand(),
            cfg.t_len,
            np.random.default_rng([cfg.seed, _S_PATH, o, i]),
        )
        for m in task.methods:
            t0 = time.perf_counter()
            try:
                if m == "pto":
                    x = solve_pto(y, fit_ridge_lag(y, window), spec)
                elif m == "eto":
                    x = solve_eto(y, spec, mle_cfg).x
                elif m == "fptp":
                    ens = bootstrap_ensemble(
                        y,
                        window,
                        cfg.fptp_members,
                        np.random.default_rng([cfg.seed, _S_FPTP, o, i]),
                    )
                    x = solve_fptp(y, ens, spec)
                elif m == "aove":
                    x = solve_aove(y, task.prior, spec)
                elif m == "oracle":
                    x = x_star
                else:
                    raise ConfigError(f"unknown method {m!r}")
            except ConfigError:
                raise
            except Exception:
                failures[m] += 1
                seconds[m] += time.perf_counter() - t0
                continue
            seconds[m] += time.perf_counter() - t0
            rho = expected_cost_rho(x, truth, spec)
            regrets[m].append((rho - rho_star) / rho_star)

        if cfg.compute_mse:
            for m in task.methods:
                factory = _mse_factory(m, cfg, window, o, i, mle_cfg)
                if factory is None:
                    continue
                try:
                    mses[m].append(rolling_mse(y, factory, window))
                except InsufficientDataError:
                    pass

    out_regret = {m: (np.mean(v) if v else np.nan) for m, v in regrets.items()}
    out_mse = {m: (np.mean(v) if v else np.nan) for m, v in mses.items()}
    return o, out_regret, out_mse, seconds, failures


def _mse_factory(method, cfg, window, oracle_idx, path_idx, mle_cfg):
    if method == "pto":
        return lambda ytr: fit_ridge_lag(ytr, window)
    if method == "fptp":
        rng = np.random.default_rng([cfg.seed, _S_MSE, oracle_idx, path_idx])
        return lambda ytr: bootstrap_ensemble(ytr, window, cfg.fptp_members, rng)
    if method == "eto":
        return lambda ytr: VarmaForecastPredictor(mle(ytr, mle_cfg).params, window)
    return None


def _run_tasks(tasks, methods, config, workers):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_evaluate_oracle, tasks))
    else:
        results = [_evaluate_oracle(t) for t in tasks]
    results.sort(key=lambda r: r[0])

    n_o = len(tasks)
    per_oracle = {m: np.full(n_o, np.nan) for m in methods}
    per_mse = {m: np.full(n_o, np.nan) for m in methods}
    seconds = dict.fromkeys(methods, 0.0)
    failures = dict.fromkeys(methods, 0)
    for o, regret, mse_o, secs, fails in results:
        for m in methods:
            per_oracle[m][o] = regret[m]
            per_mse[m][o] = mse_o[m]
            seconds[m] += secs[m]
            failures[m] += fails[m]

    mse = {}
    for m in methods:
        vals = per_mse[m]
        mse[m] = float(np.nanmean(vals)) if np.any(np.isfinite(vals)) else float("nan")
        mse[f"_per_oracle:{m}"] = vals
    return RegretReport(
        methods=tuple(methods),
        mean_regret={m: float(np.nanmean(per_oracle[m])) for m in methods},
        per_oracle_regret=per_oracle,
        mse=mse,
        seconds=seconds,
        failures=failures,
        n_oracles=n_o,
        n_paths=config.n_s,
        config=config.to_dict(),
    )


def run_well_specified(config, methods=DEFAULT_METHODS, workers=1):
    """Draw oracles and posterior atoms from the same prior (disjointly),
    evaluate every method on every simulated path, and aggregate."""
    if config.oracle_order != (1, 1):
        raise ConfigError("well-specified run requires oracle order (1, 1)")
    reference = make_reference(config.n)
    pool = build_prior(reference, config.n_t, np.random.default_rng([config.seed, _S_PRIOR]))
    draw_rng = np.random.default_rng([config.seed, _S_DRAW])
    ove_idx = draw_rng.choice(config.n_t, size=config.n_ove, replace=False, p=pool.weights)
    mask = np.ones(config.n_t, dtype=bool)
    mask[ove_idx] = False
    rest = np.flatnonzero(mask)
    w_rest = pool.weights[rest] / pool.weights[rest].sum()
    oracle_idx = rest[draw_rng.choice(rest.shape[0], size=config.n_o, replace=False, p=w_rest)]

    prior = DiscretePrior(
        [pool.atoms[i] for i in ove_idx],
        np.full(config.n_ove, 1.0 / config.n_ove),
        check_atoms=False,
    )
    spec = _draw_portfolio_spec(config.n, np.random.default_rng([config.seed, _S_SPEC]))
    prior.expected_d2_diags(spec.mu2)  # fill cache before any fan-out

    tasks = [
        _OracleTask(
            config=config,
            oracle_index=k,
            truth=pool.atoms[i],
            prior=prior,
            spec=spec,
            methods=tuple(methods),
        )
        for k, i in enumerate(oracle_idx)
    ]
    return _run_tasks(tasks, tuple(methods), config, workers)


def run_misspecified(config, methods=DEFAULT_METHODS, workers=1):
    """Oracles come from a higher-order family; the posterior atoms are
    order-(1,1) fits to short sample paths from each drawn oracle,
    weighted by the oracle's prior weight split over its fits."""
    p, q = config.oracle_order
    reference = make_reference_pq(config.n, p, q)
    atoms, weights = build_prior_pq(
        reference, config.n_t, np.random.default_rng([config.seed, _S_PRIOR])
    )
    draw_rng = np.random.default_rng([config.seed, _S_DRAW])
    oracle_idx = draw_rng.choice(config.n_t, size=config.n_o, replace=False, p=weights)

    fit_cfg = MleConfig(seed=config.seed)
    prior_atoms = []
    prior_weights = []
    for k, i in enumerate(oracle_idx):
        truth = atoms[i].expand()
        for j in range(config.n_sove):
            path = simulate(
                truth, config.t_len, np.random.default_rng([config.seed, _S_MISFIT, k, j])
            )
            prior_atoms.append(mle(path, fit_cfg).symcomm)
            prior_weights.append(weights[i] / config.n_sove)
    prior = DiscretePrior(prior_atoms, np.asarray(prior_weights), check_atoms=False)

    spec = _draw_portfolio_spec(config.n, np.random.default_rng([config.seed, _S_SPEC]))
    prior.expected_d2_diags(spec.mu2)

    tasks = [
        _OracleTask(
            config=config,
            oracle_index=k,
            truth=atoms[i].expand(),
            prior=prior,
            spec=spec,
            methods=tuple(methods),
        )
        for k, i in enumerate(oracle_idx)
    ]
    return _run_tasks(tasks, tuple(methods), config, workers)
