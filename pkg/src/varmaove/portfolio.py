"""Portfolio objective with volume-driven trading costs.

The cost of position x given next-period log dollar volume y is

    pi(x, y) = (x - mu0*e)' D1 (x - mu0*e) + (x - x0)' D2(y) (x - x0)

with D1 = mu1*I and D2(y) = mu2*Diag(exp(-y)): thin volume makes
rebalancing away from the initial position x0 expensive.  For any PSD
effective D2 the minimizer has the closed form

    x = (D1 + D2)^{-1} (mu0*D1*e + D2*x0)

used by every decision method; positions are unconstrained (shorting
allowed) and mu1 > 0 makes the objective strictly convex with a unique
minimizer.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DimensionError
from .varma import SymCommParams, stationary_covariance


@dataclass(frozen=True)
class PortfolioSpec:
    """Problem constants (n, mu0, mu1, mu2, e, x0) defining the cost."""

    mu0: float
    mu1: float
    mu2: float
    e: np.ndarray
    x0: np.ndarray

    def __init__(self, mu0, mu1, mu2, e, x0):
        e = np.atleast_1d(np.asarray(e, dtype=float))
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        if e.shape != x0.shape or e.ndim != 1:
            raise DimensionError(f"e and x0 must be equal-length vectors, got {e.shape} and {x0.shape}")
        if mu1 <= 0:
            raise ValueError(f"mu1 must be positive, got {mu1}")
        if mu2 < 0:
            raise ValueError(f"mu2 must be nonnegative, got {mu2}")
        object.__setattr__(self, "mu0", float(mu0))
        object.__setattr__(self, "mu1", float(mu1))
        object.__setattr__(self, "mu2", float(mu2))
        e.setflags(write=False)
        x0.setflags(write=False)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "x0", x0)

    @property
    def n(self):
        return self.e.shape[0]

    def to_dict(self):
        return {
            "n": self.n,
            "mu0": self.mu0,
            "mu1": self.mu1,
            "mu2": self.mu2,
            "e": self.e.tolist(),
            "x0": self.x0.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        spec = cls(mu0=d["mu0"], mu1=d["mu1"], mu2=d["mu2"], e=d["e"], x0=d["x0"])
        if "n" in d and d["n"] != spec.n:
            raise DimensionError(f"declared n={d['n']} inconsistent with vectors ({spec.n})")
        return spec


def d2_matrix(y_next, mu2):
    """Realized trading-cost matrix: mu2 * Diag(exp(-y))."""
    y_next = np.atleast_1d(np.asarray(y_next, dtype=float))
    return mu2 * np.diag(np.exp(-y_next))


def cost_pi(x, y_next, spec):
    """Realized cost of decision x at next-period log volume y_next."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y_next = np.atleast_1d(np.asarray(y_next, dtype=float))
    if x.shape != (spec.n,) or y_next.shape != (spec.n,):
        raise DimensionError(
            f"x and y_next must have shape ({spec.n},), got {x.shape} and {y_next.shape}"
        )
    da = x - spec.mu0 * spec.e
    db = x - spec.x0
    d2_diag = spec.mu2 * np.exp(-y_next)
    return float(spec.mu1 * (da @ da) + db @ (d2_diag * db))


def expected_d2(params, mu2):
    """E[D2(Y_next)] = mu2 * Diag(exp(gamma^2 / 2)).

    gamma^2 is the diagonal of the stationary covariance, so each entry
    is the lognormal mean E[exp(-Y_i)] for Y_i ~ N(0, gamma_i^2).
    """
    if isinstance(params, SymCommParams):
        gamma_diag = np.diag(params.stationary_covariance())
    else:
        gamma_diag = np.diag(stationary_covariance(params))
    return mu2 * np.diag(np.exp(0.5 * gamma_diag))


def expected_cost_rho(x, params, spec):
    """Model-expected cost of x under params: D1 quadratic + E[D2] quadratic."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (spec.n,):
        raise DimensionError(f"x must have shape ({spec.n},), got {x.shape}")
    da = x - spec.mu0 * spec.e
    db = x - spec.x0
    ed2 = expected_d2(params, spec.mu2)
    return float(spec.mu1 * (da @ da) + db @ ed2 @ db)


def solve_quadratic(d2_effective, spec):
    """Unique minimizer x = (D1 + D2)^{-1} (mu0*D1*e + D2*x0).

    d2_effective may be any PSD matrix (diagonal in the standard model);
    it is symmetrized before the solve to absorb round-off.
    """
    d2 = np.asarray(d2_effective, dtype=float)
    if d2.shape != (spec.n, spec.n):
        raise DimensionError(f"d2_effective must be {spec.n}x{spec.n}, got {d2.shape}")
    d2 = 0.5 * (d2 + d2.T)
    lhs = spec.mu1 * np.eye(spec.n) + d2
    rhs = spec.mu0 * spec.mu1 * spec.e + d2 @ spec.x0
    c, low = cho_factor(lhs)
    return cho_solve((c, low), rhs)
