"""Real-data pipeline: bars to biweekly volumes to rolling SAA regret.

Daily dollar volume (reported volume times the OHLC4 average price) is
aggregated into tau shifted log biweekly series, models are trained per
shift on a fixed training horizon, a kernel-density prior over fitted
parameter eigenvalues supplies the posterior atoms, and evaluation
rolls over the test region scoring every method against the closed-form
minimizer of the sample-average cost at each step.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import (
    ConfigError,
    DataError,
    EmptyIntersectionError,
    InsufficientDataError,
    MissingTickerError,
    ParseError,
)
from .methods import (
    DiscretePrior,
    MleConfig,
    VarmaForecastPredictor,
    bootstrap_ensemble,
    fit_ridge_lag,
    mle,
    solve_aove,
    solve_fptp,
    solve_pto,
)
from .portfolio import PortfolioSpec, cost_pi, d2_matrix, expected_d2, solve_quadratic
from .synthetic import RegretReport

BAR_COLUMNS = ("date", "ticker", "open", "high", "low", "close", "volume")

DEFAULT_BANDWIDTHS = np.logspace(np.log10(0.01), np.log10(1.0), 20)
DEFAULT_FOLDS = 5

_S_FPTP = 10
_S_SELECT = 11
_S_SPEC = 12


# ---------------------------------------------------------------------------
# Ingestion and aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DailyBarSeries:
    """Aligned OHLCV bars for a fixed ticker universe."""

    dates: np.ndarray  # datetime64[D], strictly increasing
    tickers: tuple
    open: np.ndarray  # each (D, n)
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray

    def __post_init__(self):
        d = self.dates.shape[0]
        n = len(self.tickers)
        for name in ("open", "high", "low", "close", "volume"):
            arr = getattr(self, name)
            if arr.shape != (d, n):
                raise DataError(f"{name} must have shape ({d}, {n}), got {arr.shape}")
        if d > 1 and not np.all(np.diff(self.dates) > np.timedelta64(0, "D")):
            raise DataError("dates must be strictly increasing")
        if np.any(self.volume <= 0):
            raise DataError("volumes must be positive")

    @property
    def n(self):
        return len(self.tickers)

    @property
    def n_days(self):
        return self.dates.shape[0]

    def ohlc4(self):
        return 0.25 * (self.open + self.high + self.low + self.close)

    def dollar_volume(self):
        return self.volume * self.ohlc4()


def ingest_daily_bars(source, tickers, date_range=None):
    """Load and align bars from a delimited file.

    Expects a header row ``date,ticker,open,high,low,close,volume`` with
    ISO-8601 dates; keeps only dates present for every requested ticker.
    """
    tickers = tuple(tickers)
    if not tickers:
        raise ConfigError("at least one ticker required")
    try:
        frame = pd.read_csv(source, comment="#")
    except (ValueError, OSError) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise ParseError(f"could not parse bar file: {exc}") from exc
    missing_cols = set(BAR_COLUMNS) - set(frame.columns)
    if missing_cols:
        raise ParseError(f"bar file missing columns: {sorted(missing_cols)}")
    try:
        frame["date"] = pd.to_datetime(frame["date"], format="ISO8601")
        for col in ("open", "high", "low", "close", "volume"):
            frame[col] = pd.to_numeric(frame[col])
    except (ValueError, TypeError) as exc:
        raise ParseError(f"unparseable row in bar file: {exc}") from exc
    if frame[list(BAR_COLUMNS)].isna().any().any():
        raise ParseError("bar file contains missing or unparseable values")

    present = set(frame["ticker"].unique())
    for ticker in tickers:
        if ticker not in present:
            raise MissingTickerError(ticker)
    frame = frame[frame["ticker"].isin(tickers)]
    if date_range is not None:
        start, end = date_range
        if start is not None:
            frame = frame[frame["date"] >= pd.Timestamp(start)]
        if end is not None:
            frame = frame[frame["date"] <= pd.Timestamp(end)]

    per_ticker = {t: g.set_index("date").sort_index() for t, g in frame.groupby("ticker")}
    common = None
    for t in tickers:
        idx = per_ticker[t].index
        common = idx if common is None else common.intersection(idx)
    if common is None or len(common) == 0:
        raise EmptyIntersectionError(
            f"tickers {list(tickers)} share no trading dates in the requested range"
        )
    common = common.sort_values()

    fields = {}
    for col in ("open", "high", "low", "close", "volume"):
        fields[col] = np.column_stack(
            [per_ticker[t].loc[common, col].to_numpy(dtype=float) for t in tickers]
        )
    return DailyBarSeries(
        dates=common.to_numpy(dtype="datetime64[D]"),
        tickers=tickers,
        **fields,
    )


@dataclass(frozen=True)
class AggregatedSeries:
    """tau shifted demeaned log biweekly dollar-volume series."""

    series: tuple  # tau arrays of shape (T_agg, n)
    mu: np.ndarray
    tau: int

    @property
    def n(self):
        return self.series[0].shape[1]

    @property
    def t_agg(self):
        return self.series[0].shape[0]


def required_days(tau, t_agg):
    return tau * t_agg + tau - 1


def aggregate(daily, tau, t_agg, mu):
    """Shifted block sums: entry (i, t) covers days tau*(t-1)+i .. tau*t+i-1
    (1-based), log-transformed and demeaned by the supplied mu."""
    if tau < 1 or t_agg < 1:
        raise ConfigError("tau and t_agg must be positive")
    need = required_days(tau, t_agg)
    dv = daily.dollar_volume()
    if dv.shape[0] < need:
        raise InsufficientDataError(
            f"aggregation needs {need} daily rows, have {dv.shape[0]}"
        )
    mu = np.broadcast_to(np.asarray(mu, dtype=float), (daily.n,)).copy()
    series = []
    for i in range(1, tau + 1):
        rows = np.empty((t_agg, daily.n))
        for t in range(1, t_agg + 1):
            lo = tau * (t - 1) + i - 1
            hi = tau * t + i - 1
            rows[t - 1] = np.log(dv[lo:hi].sum(axis=0)) - mu
        series.append(rows)
    return AggregatedSeries(series=tuple(series), mu=mu, tau=tau)


def training_mean(daily, tau, t_train):
    """Demeaning vector from the training portion of every shift.

    Computed on raw log-aggregated volumes so the test region never
    leaks into the centering.
    """
    raw = aggregate(daily, tau, t_train, mu=np.zeros(daily.n))
    stacked = np.vstack([s for s in raw.series])
    return stacked.mean(axis=0)


# ---------------------------------------------------------------------------
# Training and the KDE prior
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainedBundle:
    """Per-shift fitted models plus the pooled parameter support."""

    pto: tuple
    fptp: tuple
    eto: tuple  # MleResult per shift
    support: tuple  # SymCommParams from rolling training windows
    window: int
    mle_failures: int


def train_models(agg, t_train, t_len, window=10, fptp_members=25, seed=0, mle_config=None):
    """Fit PTO/ETO/FPtP per shift and pool rolling-window fits as support.

    The support collects one order-(1,1) fit per length-t_len window of
    each shift's training region; non-converged fits are logged and
    excluded.
    """
    if t_train < t_len:
        raise ConfigError(f"t_train ({t_train}) must be at least t_len ({t_len})")
    if t_train > agg.t_agg:
        raise InsufficientDataError(
            f"training horizon {t_train} exceeds aggregated length {agg.t_agg}"
        )
    mle_config = mle_config or MleConfig(seed=seed)
    pto = []
    fptp = []
    eto = []
    support = []
    failures = 0
    for i, full in enumerate(agg.series):
        ytr = full[:t_train]
        pto.append(fit_ridge_lag(ytr, window))
        fptp.append(
            bootstrap_ensemble(
                ytr, window, fptp_members, np.random.default_rng([seed, _S_FPTP, i])
            )
        )
        eto.append(mle(ytr, mle_config))
        for k in range(t_train - t_len + 1):
            fit = mle(ytr[k : k + t_len], mle_config)
            if fit.converged:
                support.append(fit.symcomm)
            else:
                failures += 1
    return TrainedBundle(
        pto=tuple(pto),
        fptp=tuple(fptp),
        eto=tuple(eto),
        support=tuple(support),
        window=window,
        mle_failures=failures,
    )


def eigen_feature(params):
    """Canonical eigenvalue feature (theta, sorted lam_phi, sorted lam_sigma)."""
    return np.concatenate(
        [[params.theta], np.sort(params.lam_phi), np.sort(params.lam_sigma)]
    )


def _kde_log_density(points, train, bandwidth):
    """Gaussian-product-kernel log densities of `points` given `train`."""
    d = train.shape[1]
    diff = points[:, None, :] - train[None, :, :]
    sq = np.sum(diff * diff, axis=2) / (2.0 * bandwidth * bandwidth)
    shift = sq.min(axis=1, keepdims=True)
    dens = np.exp(-(sq - shift)).sum(axis=1)
    log_norm = np.log(train.shape[0]) + d * np.log(bandwidth) + 0.5 * d * np.log(2 * np.pi)
    return np.log(dens) - shift[:, 0] - log_norm


def gen_prior_kde(support, bandwidths=None, k_folds=DEFAULT_FOLDS):
    """Discrete prior over the support, weighted by a cross-validated KDE.

    The bandwidth maximizing the K-fold held-out mean log density is
    selected, the density is refitted on the full support, and each
    atom's weight is its own (normalized) density value.  Folds are
    assigned round-robin in canonical (lexicographic feature) order so
    the result is invariant to permutations of the support list.
    """
    support = tuple(support)
    if bandwidths is None:
        bandwidths = DEFAULT_BANDWIDTHS
    bandwidths = np.asarray(bandwidths, dtype=float)
    if k_folds < 2:
        raise ConfigError("need at least 2 folds")
    if len(support) < k_folds:
        raise ConfigError(
            f"support size {len(support)} smaller than fold count {k_folds}"
        )
    feats = np.stack([eigen_feature(a) for a in support])
    order = np.lexsort(feats.T[::-1])
    fold_of = np.empty(len(support), dtype=int)
    fold_of[order] = np.arange(len(support)) % k_folds

    best_b = None
    best_score = -np.inf
    for b in bandwidths:
        scores = []
        for k in range(k_folds):
            held = fold_of == k
            rest = ~held
            if not held.any() or not rest.any():
                continue
            scores.append(float(np.mean(_kde_log_density(feats[held], feats[rest], b))))
        score = float(np.mean(scores))
        if score > best_score:
            best_score = score
            best_b = float(b)

    log_dens = _kde_log_density(feats, feats, best_b)
    weights = np.exp(log_dens - log_dens.max())
    return DiscretePrior(support, weights / weights.sum(), check_atoms=False)


def select_prior_atoms(prior, n_ove, rng):
    """A-OVE atoms from the KDE prior.

    If the support is no larger than n_ove the prior is used exactly;
    otherwise n_ove atoms are drawn from it (with replacement) and
    weighted uniformly as a Monte Carlo stand-in.
    """
    if len(prior) <= n_ove:
        return prior
    rng = np.random.default_rng(rng)
    idx = rng.choice(len(prior), size=n_ove, replace=True, p=prior.weights)
    return DiscretePrior(
        [prior.atoms[i] for i in idx],
        np.full(n_ove, 1.0 / n_ove),
        check_atoms=False,
    )


# ---------------------------------------------------------------------------
# Portfolio constants from history
# ---------------------------------------------------------------------------


def estimate_portfolio_spec(
    daily, tau, t_train, rng, a_fund=1.0, gamma=0.1, mu2=0.1
):
    """Problem constants from the training window.

    e is the per-asset mean biweekly simple return, delta^2 the
    per-asset return variance averaged across assets, and the initial
    position is uniform on (0,1)^n.
    """
    rng = np.random.default_rng(rng)
    ends = [tau * t - 1 for t in range(1, t_train + 1)]
    if ends[-1] >= daily.n_days:
        raise InsufficientDataError(
            f"need {ends[-1] + 1} daily rows for {t_train} biweekly returns"
        )
    closes = daily.close[ends]
    rets = closes[1:] / closes[:-1] - 1.0
    e = rets.mean(axis=0)
    delta2 = float(np.mean(rets.var(axis=0, ddof=1)))
    if delta2 <= 0:
        raise DataError("return variance is zero; cannot scale the objective")
    return PortfolioSpec(
        mu0=a_fund / (gamma * delta2),
        mu1=gamma * delta2 / (2 * a_fund),
        mu2=mu2,
        e=e,
        x0=rng.uniform(0.0, 1.0, daily.n),
    )


# ---------------------------------------------------------------------------
# Rolling SAA evaluation
# ---------------------------------------------------------------------------

REAL_METHODS = ("aove", "eto", "pto", "fptp")


@dataclass
class StepTrace:
    rows: list = field(default_factory=list)  # (step, method, shift, cost)

    def add(self, step, method, shift, cost):
        self.rows.append((step, method, shift, float(cost)))


@dataclass(frozen=True)
class _StepContext:
    bundle: TrainedBundle
    prior: DiscretePrior
    spec: PortfolioSpec
    methods: tuple
    eto_decisions: tuple


_STEP_CTX = None


def _set_step_ctx(ctx):
    global _STEP_CTX
    _STEP_CTX = ctx


def _evaluate_step_global(task):
    return _evaluate_step(_STEP_CTX, task)


def _evaluate_step(ctx, task):
    l, windows, nxt = task
    spec = ctx.spec
    tau = windows.shape[0]
    d2_saa = np.zeros((spec.n, spec.n))
    for y_next in nxt:
        d2_saa += d2_matrix(y_next, spec.mu2)
    d2_saa /= tau

    def rho_l(x):
        return float(np.mean([cost_pi(x, y_next, spec) for y_next in nxt]))

    x_star = solve_quadratic(d2_saa, spec)
    rho_star = rho_l(x_star)

    regret = {}
    costs_rows = []
    seconds = dict.fromkeys(ctx.methods, 0.0)
    failures = dict.fromkeys(ctx.methods, 0)
    for m in ctx.methods:
        t0 = time.perf_counter()
        costs = []
        try:
            for i in range(tau):
                if m == "pto":
                    x = solve_pto(windows[i], ctx.bundle.pto[i], spec)
                elif m == "fptp":
                    x = solve_fptp(windows[i], ctx.bundle.fptp[i], spec)
                elif m == "eto":
                    x = ctx.eto_decisions[i]
                elif m == "aove":
                    x = solve_aove(windows[i], ctx.prior, spec)
                else:
                    raise ConfigError(f"unknown method {m!r}")
                cost = rho_l(x)
                costs.append(cost)
                costs_rows.append((l, m, i + 1, cost))
        except ConfigError:
            raise
        except Exception:
            failures[m] += 1
            seconds[m] += time.perf_counter() - t0
            regret[m] = np.nan
            continue
        seconds[m] += time.perf_counter() - t0
        sigma_l = float(np.mean(costs))
        regret[m] = (sigma_l - rho_star) / rho_star

    sq_errors = {m: [] for m in ctx.methods}
    for m in ctx.methods:
        pred_i = _one_step_predictor(m, ctx.bundle)
        if pred_i is None:
            continue
        for i in range(tau):
            pred = pred_i(i, windows[i])
            sq_errors[m].append(float(np.sum((pred - nxt[i]) ** 2)))
    return l, regret, costs_rows, seconds, failures, sq_errors


def rolling_evaluate(
    agg_test, bundle, prior, spec, t_len, n_ts, methods=REAL_METHODS, workers=1
):
    """Score every method against the SAA oracle over rolling test steps.

    At step l each shift contributes a window decision and a realized
    next value; the empirical cost averages the realized quadratic over
    shifts, and the oracle minimizes that same quadratic in closed form.
    Steps evaluate independently (optionally across processes) and are
    reduced in step order, so results do not depend on the worker count.
    Returns (RegretReport keyed by step, StepTrace).
    """
    tau = agg_test.tau
    t_test = agg_test.t_agg
    if n_ts < 1:
        raise ConfigError("n_ts must be positive")
    if t_test < n_ts + t_len:
        raise InsufficientDataError(
            f"test region length {t_test} too short for n_ts={n_ts}, T={t_len}"
        )
    methods = tuple(methods)
    eto_decisions = ()
    if "eto" in methods:
        eto_decisions = tuple(
            solve_quadratic(expected_d2(fit.symcomm, spec.mu2), spec)
            for fit in bundle.eto
        )
    prior.expected_d2_diags(spec.mu2)  # fill cache before any fan-out
    ctx = _StepContext(
        bundle=bundle,
        prior=prior,
        spec=spec,
        methods=methods,
        eto_decisions=eto_decisions,
    )
    tasks = []
    for l in range(1, n_ts + 1):
        windows = np.stack(
            [agg_test.series[i][l - 1 : l - 1 + t_len] for i in range(tau)]
        )
        nxt = np.stack([agg_test.series[i][l - 1 + t_len] for i in range(tau)])
        tasks.append((l, windows, nxt))

    if workers > 1:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_set_step_ctx, initargs=(ctx,)
        ) as pool:
            results = list(pool.map(_evaluate_step_global, tasks))
    else:
        results = [_evaluate_step(ctx, t) for t in tasks]
    results.sort(key=lambda r: r[0])

    per_step = {m: np.full(n_ts, np.nan) for m in methods}
    sq_errors = {m: [] for m in methods}
    seconds = dict.fromkeys(methods, 0.0)
    failures = dict.fromkeys(methods, 0)
    trace = StepTrace()
    for l, regret, costs_rows, secs, fails, errs in results:
        for m in methods:
            per_step[m][l - 1] = regret[m]
            seconds[m] += secs[m]
            failures[m] += fails[m]
            sq_errors[m].extend(errs[m])
        for row in costs_rows:
            trace.add(*row)

    mse = {}
    for m in methods:
        vals = sq_errors[m]
        mse[m] = float(np.mean(vals)) if vals else float("nan")
        mse[f"_per_oracle:{m}"] = np.full(n_ts, mse[m])
    report = RegretReport(
        methods=methods,
        mean_regret={m: float(np.nanmean(per_step[m])) for m in methods},
        per_oracle_regret=per_step,
        mse=mse,
        seconds=seconds,
        failures=failures,
        n_oracles=n_ts,
        n_paths=tau,
    )
    return report, trace


def _one_step_predictor(method, bundle):
    if method == "pto":
        return lambda i, window: bundle.pto[i].predict(window)
    if method == "fptp":
        return lambda i, window: bundle.fptp[i].predict(window)
    if method == "eto":
        return lambda i, window: VarmaForecastPredictor(
            bundle.eto[i].params, window.shape[0]
        ).predict(window)
    return None


# ---------------------------------------------------------------------------
# End-to-end orchestration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RealConfig:
    tickers: tuple
    date_start: str = None
    date_end: str = None
    tau: int = 10
    t_len: int = 10
    t_train: int = 40
    n_ts: int = 20
    n_ove: int = 200
    window: int = 10
    fptp_members: int = 25
    k_folds: int = DEFAULT_FOLDS
    seed: int = 0
    a_fund: float = 1.0
    gamma: float = 0.1
    mu2: float = 0.1

    def to_dict(self):
        d = dict(self.__dict__)
        d["tickers"] = list(self.tickers)
        return d

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "tickers" not in d:
            raise ConfigError("config requires 'tickers'")
        d = dict(d)
        d["tickers"] = tuple(d["tickers"])
        return cls(**d)


def run_real_pipeline(daily, config, methods=REAL_METHODS, workers=1):
    """Aggregate, train, build the prior, and roll the SAA evaluation.

    Returns (RegretReport, StepTrace, TrainedBundle).
    """
    t_agg = config.t_train + config.n_ts + config.t_len
    mu = training_mean(daily, config.tau, config.t_train)
    agg = aggregate(daily, config.tau, t_agg, mu)

    train_view = AggregatedSeries(
        series=tuple(s[: config.t_train] for s in agg.series),
        mu=agg.mu,
        tau=agg.tau,
    )
    test_view = AggregatedSeries(
        series=tuple(s[config.t_train :] for s in agg.series),
        mu=agg.mu,
        tau=agg.tau,
    )
    bundle = train_models(
        train_view,
        config.t_train,
        config.t_len,
        window=min(config.window, config.t_len),
        fptp_members=config.fptp_members,
        seed=config.seed,
    )
    prior_full = gen_prior_kde(bundle.support, k_folds=config.k_folds)
    prior = select_prior_atoms(
        prior_full, config.n_ove, np.random.default_rng([config.seed, _S_SELECT])
    )
    spec = estimate_portfolio_spec(
        daily,
        config.tau,
        config.t_train,
        np.random.default_rng([config.seed, _S_SPEC]),
        a_fund=config.a_fund,
        gamma=config.gamma,
        mu2=config.mu2,
    )
    report, trace = rolling_evaluate(
        test_view,
        bundle,
        prior,
        spec,
        config.t_len,
        config.n_ts,
        methods=methods,
        workers=workers,
    )
    report.config = config.to_dict()
    return report, trace, bundle
