"""Exception hierarchy shared across the package."""


class VarmaOveError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(VarmaOveError):
    """Structurally inconsistent shapes (distinct from model invalidity)."""


class InvalidModelError(VarmaOveError):
    """Parameters violate stationarity, invertibility, or definiteness."""


class InsufficientDataError(VarmaOveError):
    """Series too short for the requested operation."""


class DegenerateModelError(VarmaOveError):
    """A prediction-error covariance stayed singular after jitter."""

    def __init__(self, t, message=None):
        self.t = t
        super().__init__(message or f"prediction-error covariance singular at t={t}")


class NearUnitRootError(VarmaOveError):
    """The stationary-covariance linear system is numerically singular."""


class DataError(VarmaOveError):
    """Problems with externally supplied data files or series."""


class MissingTickerError(DataError):
    def __init__(self, ticker):
        self.ticker = ticker
        super().__init__(f"ticker not present in source data: {ticker!r}")


class EmptyIntersectionError(DataError):
    """Requested tickers share no common trading dates."""


class ParseError(DataError):
    """A row or document could not be parsed."""


class ConfigError(VarmaOveError):
    """Invalid run configuration (CLI exit code 2)."""
