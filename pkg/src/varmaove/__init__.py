"""Decision-making under autocorrelated (VARMA) uncertainty.

Exact Gaussian likelihoods via a forward innovation recursion, four
portfolio decision methods sharing one closed-form quadratic solver,
and regret-evaluation pipelines on synthetic and bar data.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataError,
    DegenerateModelError,
    DimensionError,
    EmptyIntersectionError,
    InsufficientDataError,
    InvalidModelError,
    MissingTickerError,
    NearUnitRootError,
    ParseError,
    VarmaOveError,
)
from .likelihood import (
    ForwardSeries,
    InnovationSequence,
    LogLikelihoodParts,
    forward_transform,
    gamma_w,
    innovations,
    log_likelihood,
    log_likelihood_symcomm,
    log_likelihood_varma11,
    one_step_forecast,
)
from .methods import (
    DiscretePrior,
    EnsemblePredictor,
    EtoResult,
    MleConfig,
    MleResult,
    RidgeLagPredictor,
    VarmaForecastPredictor,
    aove_posterior_weights,
    bootstrap_ensemble,
    fit_ridge_lag,
    mle,
    solve_aove,
    solve_eto,
    solve_fptp,
    solve_pto,
)
from .portfolio import (
    PortfolioSpec,
    cost_pi,
    d2_matrix,
    expected_cost_rho,
    expected_d2,
    solve_quadratic,
)
from .realdata import (
    AggregatedSeries,
    DailyBarSeries,
    RealConfig,
    TrainedBundle,
    aggregate,
    eigen_feature,
    gen_prior_kde,
    ingest_daily_bars,
    rolling_evaluate,
    run_real_pipeline,
    train_models,
)
from .synthetic import (
    RegretReport,
    SyntheticConfig,
    build_prior,
    make_reference,
    rolling_mse,
    run_misspecified,
    run_well_specified,
    sample_candidate,
)
from .varma import (
    SymCommParams,
    ValidationReport,
    VarmaParams,
    autocovariance,
    simulate,
    stationary_covariance,
    validate,
)

__all__ = [name for name in dir() if not name.startswith("_")]
