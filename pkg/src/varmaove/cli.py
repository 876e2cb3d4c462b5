"""Command-line interface.

Subcommands wrap the library: `validate`, `simulate`, `loglik`, `solve`,
`eval-synthetic`, and `eval-real`.  Every run resolves its full
configuration up front and stamps outputs with the tool version, a
config digest, and the seed.  Exit codes: 0 success, 1 domain failure
(invalid model, degenerate recursion, non-convergence), 2 usage or
parse error.
"""

import argparse
import json
import sys

import numpy as np

from . import __version__
from .errors import (
    ConfigError,
    DataError,
    DegenerateModelError,
    DimensionError,
    InsufficientDataError,
    InvalidModelError,
    NearUnitRootError,
    ParseError,
)
from . import fileio
from .methods import (
    aove_posterior_weights,
    bootstrap_ensemble,
    fit_ridge_lag,
    mle,
    solve_quadratic,
)
from .portfolio import d2_matrix, expected_d2
from .realdata import RealConfig, ingest_daily_bars, run_real_pipeline
from .synthetic import (
    DEFAULT_METHODS,
    SyntheticConfig,
    run_misspecified,
    run_well_specified,
)
from .varma import SymCommParams, simulate, validate

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2

_DOMAIN_ERRORS = (
    InvalidModelError,
    DegenerateModelError,
    NearUnitRootError,
    InsufficientDataError,
    DataError,
)
_USAGE_ERRORS = (ConfigError, ParseError, DimensionError, FileNotFoundError)


def _expand(params):
    return params.expand() if isinstance(params, SymCommParams) else params


def cmd_validate(args):
    params = _expand(fileio.load_params_file(args.params))
    report = validate(params)
    if report.valid:
        print("valid")
        return EXIT_OK
    print("invalid")
    for violation in report.violations:
        print(f"  - {violation}")
    return EXIT_DOMAIN


def cmd_simulate(args):
    if args.t_len <= 0:
        raise ConfigError(f"T must be positive, got {args.t_len}")
    params = _expand(fileio.load_params_file(args.params))
    y = simulate(params, args.t_len, np.random.default_rng(args.seed))
    config_obj = {"command": "simulate", "params": args.params, "T": args.t_len}
    fileio.write_sample(args.out, y, config_obj, args.seed)
    print(f"wrote {y.shape[0]}x{y.shape[1]} sample to {args.out}")
    return EXIT_OK


def cmd_loglik(args):
    from .likelihood import log_likelihood, log_likelihood_symcomm

    params = fileio.load_params_file(args.params)
    y = fileio.read_sample(args.sample)
    n = params.n
    if y.shape[1] != n:
        raise ParseError(
            f"sample has {y.shape[1]} series but parameters expect {n}"
        )
    if isinstance(params, SymCommParams):
        parts = log_likelihood_symcomm(y, params)
    else:
        parts = log_likelihood(y, params)
    print(f"log_g0 = {parts.log_g0:.17g}")
    print(f"log_g1 = {parts.log_g1:.17g}")
    print(f"total  = {parts.total:.17g}")
    return EXIT_OK


def _solve_dispatch(args, y, spec):
    rng = np.random.default_rng(args.seed)
    if args.method in ("pto", "fptp") and args.prior is not None:
        raise ConfigError(f"--method {args.method} does not take --prior")

    if args.method == "pto":
        predictor = fit_ridge_lag(y, args.window)
        forecast = predictor.predict(y)
        d2 = d2_matrix(forecast, spec.mu2)
        return solve_quadratic(d2, spec), np.diag(d2)
    if args.method == "fptp":
        ensemble = bootstrap_ensemble(y, args.window, args.members, rng)
        d2 = np.zeros((spec.n, spec.n))
        for w, pred in zip(ensemble.weights, ensemble.predict_all(y)):
            d2 += w * d2_matrix(pred, spec.mu2)
        return solve_quadratic(d2, spec), np.diag(d2)
    if args.method == "eto":
        if args.prior is not None:
            raise ConfigError("--method eto does not take --prior")
        if args.params is not None:
            fitted = fileio.load_params_file(args.params)
        else:
            fitted = mle(y).symcomm
        d2 = expected_d2(fitted, spec.mu2)
        return solve_quadratic(d2, spec), np.diag(d2)
    if args.method == "aove":
        if args.prior is None:
            raise ConfigError("--method aove requires --prior")
        prior = fileio.load_prior_file(args.prior)
        w = aove_posterior_weights(y, prior)
        d2_diag = w @ prior.expected_d2_diags(spec.mu2)
        return solve_quadratic(np.diag(d2_diag), spec), d2_diag
    raise ConfigError(f"unknown method {args.method!r}")


def cmd_solve(args):
    y = fileio.read_sample(args.sample)
    spec = fileio.load_spec_file(args.spec)
    if y.shape[1] != spec.n:
        raise ParseError(f"sample has {y.shape[1]} series but spec expects {spec.n}")
    x, d2_diag = _solve_dispatch(args, y, spec)
    config_obj = {
        "command": "solve",
        "method": args.method,
        "sample": args.sample,
        "spec": args.spec,
        "params": args.params,
        "prior": args.prior,
        "window": args.window,
        "members": args.members,
    }
    fileio.write_decision(args.out, x, d2_diag, config_obj, args.seed)
    print(f"wrote decision to {args.out}")
    return EXIT_OK


def cmd_eval_synthetic(args):
    doc = fileio.load_config_file(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    methods = tuple(doc.pop("methods", DEFAULT_METHODS))
    config = SyntheticConfig.from_dict(doc)
    if config.oracle_order == (1, 1):
        report = run_well_specified(config, methods=methods, workers=args.workers)
    else:
        report = run_misspecified(config, methods=methods, workers=args.workers)
    paths = fileio.write_report(args.out_dir, report, config.to_dict(), config.seed)
    for line in report.summary_lines():
        print(line)
    print("wrote", *paths)
    return EXIT_OK


def cmd_eval_real(args):
    doc = fileio.load_config_file(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    config = RealConfig.from_dict(doc)
    date_range = None
    if config.date_start or config.date_end:
        date_range = (config.date_start, config.date_end)
    daily = ingest_daily_bars(args.bars, config.tickers, date_range)
    report, trace, _ = run_real_pipeline(daily, config, workers=args.workers)
    paths = fileio.write_report(args.out_dir, report, config.to_dict(), config.seed)
    import os

    trace_path = os.path.join(args.out_dir, "trace.csv")
    fileio.write_trace(trace_path, trace, config.to_dict(), config.seed)
    for line in report.summary_lines():
        print(line)
    print("wrote", *paths, trace_path)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="varmaove",
        description="Decision-making under autocorrelated uncertainty",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a parameter file")
    p.add_argument("--params", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", help="simulate a sample path")
    p.add_argument("--params", required=True)
    p.add_argument("--T", dest="t_len", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("loglik", help="exact log-likelihood of a sample")
    p.add_argument("--params", required=True)
    p.add_argument("--sample", required=True)
    p.set_defaults(func=cmd_loglik)

    p = sub.add_parser("solve", help="compute a portfolio decision")
    p.add_argument("--method", required=True, choices=("pto", "eto", "fptp", "aove"))
    p.add_argument("--sample", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--params", default=None, help="parameters (eto: skip estimation)")
    p.add_argument("--prior", default=None, help="prior file (aove)")
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--members", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eval-synthetic", help="synthetic regret benchmark")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", default="out-synthetic")
    p.set_defaults(func=cmd_eval_synthetic)

    p = sub.add_parser("eval-real", help="rolling evaluation on bar data")
    p.add_argument("--config", required=True)
    p.add_argument("--bars", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", default="out-real")
    p.set_defaults(func=cmd_eval_real)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _DOMAIN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except json.JSONDecodeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
