"""Hot numerical kernels, JIT-compiled when numba is available.

Each kernel is written as a plain-numpy function and wrapped with
``numba.njit`` at import time.  If numba is missing the pure-Python
version runs unchanged, so results are bit-identical either way (same
operations in the same order, no fastmath).
"""

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def decorate(func):
            return func

        if args and callable(args[0]):
            return args[0]
        return decorate


@njit(cache=True)
def varma_recursion(phi, theta, eps):
    """Run the VARMA recursion over pre-drawn innovations.

    phi : (p, n, n), theta : (q, n, n), eps : (m, n).
    Pre-sample values of y and eps are zero; returns the full (m, n)
    path (caller discards burn-in).
    """
    p = phi.shape[0]
    q = theta.shape[0]
    m, n = eps.shape
    y = np.zeros((m, n))
    for t in range(m):
        acc = eps[t].copy()
        for i in range(1, p + 1):
            if t - i >= 0:
                acc += phi[i - 1] @ y[t - i]
        for j in range(1, q + 1):
            if t - j >= 0:
                acc += theta[j - 1] @ eps[t - j]
        y[t] = acc
    return y


@njit(cache=True)
def symcomm_filter(ytil, theta, lam_phi, lam_sig, lam_gam):
    """Innovation filter for simultaneously diagonalizable VARMA(1,1).

    ytil : (T, n) observations rotated into the common eigenbasis.
    theta : scalar MA coefficient; lam_phi/lam_sig : (n,) AR and noise
    eigenvalues; lam_gam : (n,) stationary-variance eigenvalues.

    Returns (sum_t log det S_t, sum_t r_t' S_t^{-1} r_t) for the
    forward-transformed series, where S_t is diagonal in this basis.
    """
    T, n = ytil.shape
    s1 = 1.0 + theta * theta
    logdet = 0.0
    quad = 0.0

    # t = 1: r = alpha_1 - Lam_phi beta_1, S_1 = s1 * Lam_sig
    alpha = ytil[0].copy()
    g = np.zeros(n)
    for k in range(n):
        r = alpha[k] - lam_phi[k] * ytil[1, k]
        v = s1 * lam_sig[k]
        logdet += np.log(v)
        quad += r * r / v
    s_prev = s1

    for i in range(1, T):
        d = theta / s_prev
        for k in range(n):
            alpha[k] = ytil[i, k] - d * alpha[k]
            g[k] = d * (ytil[i, k] - g[k])
        if i < T - 1:
            s_cur = s1 - theta * d
            for k in range(n):
                r = alpha[k] - lam_phi[k] * ytil[i + 1, k] + lam_phi[k] * g[k]
                v = s_cur * lam_sig[k]
                logdet += np.log(v)
                quad += r * r / v
            s_prev = s_cur
        else:
            for k in range(n):
                r = alpha[k] + lam_phi[k] * g[k]
                v = lam_gam[k] - (theta * theta / s_prev) * lam_sig[k]
                logdet += np.log(v)
                quad += r * r / v
    return logdet, quad
