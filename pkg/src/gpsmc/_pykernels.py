"""Numpy implementation of the hot kernels.

Mirrors ``_ckernels.pyx`` function for function; used when the compiled
module is unavailable or ``GPSMC_BACKEND=python`` is set.
"""
import numpy as np
from scipy.spatial.distance import cdist

NAME = "python"

# Relative diagonal jitter tried in order; the scale is mean(diag(K)).
JITTER_LEVELS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)

_STACK_LIMIT = 2_000_000


def se_kernel(A, B, inv_ls, sf2):
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    inv_ls = np.asarray(inv_ls, dtype=float)
    if A.shape[0] == 0 or B.shape[0] == 0:
        return np.zeros((A.shape[0], B.shape[0]))
    sq = cdist(A * inv_ls, B * inv_ls, "sqeuclidean")
    return sf2 * np.exp(-0.5 * sq)


def _gram_stack(A, B, inv_ls, sf2):
    """Kernel matrices for every row of ``inv_ls``: shape (N, nA, nB)."""
    N, d = inv_ls.shape
    nA, nB = A.shape[0], B.shape[0]
    if d * nA * nB <= _STACK_LIMIT:
        diff2 = (A.T[:, :, None] - B.T[:, None, :]) ** 2
        q = (inv_ls**2) @ diff2.reshape(d, nA * nB)
        return sf2[:, None, None] * np.exp(-0.5 * q).reshape(N, nA, nB)
    out = np.empty((N, nA, nB))
    for i in range(N):
        out[i] = se_kernel(A, B, inv_ls[i], sf2[i])
    return out


def _factor_one(K):
    """Cholesky of one matrix under the jitter policy; (L, level) or (None, -1)."""
    n = K.shape[0]
    scale = np.trace(K) / n
    for level, rel in enumerate(JITTER_LEVELS):
        try:
            return np.linalg.cholesky(K + (rel * scale) * np.eye(n)), level
        except np.linalg.LinAlgError:
            continue
    return None, -1


def _factor_stack(K):
    N, n, _ = K.shape
    status = np.zeros(N, dtype=np.int64)
    try:
        return np.linalg.cholesky(K), status
    except np.linalg.LinAlgError:
        pass
    L = np.full_like(K, np.nan)
    for i in range(N):
        Li, level = _factor_one(K[i])
        status[i] = level
        if Li is not None:
            L[i] = Li
    return L, status


def se_loglik_batch(X, R, inv_ls, sf2, sn2):
    """Gaussian log-likelihood of residuals ``R`` (N, n) under SE kernels.

    Returns ``(values, status)``; ``status[i]`` is the jitter level used or
    -1 when factorization failed, in which case ``values[i]`` is NaN.
    """
    X = np.ascontiguousarray(X, dtype=float)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    N, n = R.shape
    if n == 0:
        return np.zeros(N), np.zeros(N, dtype=np.int64)
    K = _gram_stack(X, X, inv_ls, sf2)
    K[:, np.arange(n), np.arange(n)] += sn2[:, None]
    L, status = _factor_stack(K)
    ok = status >= 0
    values = np.full(N, np.nan)
    if ok.any():
        Lo = L[ok]
        z = np.linalg.solve(Lo, R[ok][:, :, None])[:, :, 0]
        logdet = np.log(np.diagonal(Lo, axis1=1, axis2=2)).sum(axis=1)
        values[ok] = -0.5 * np.einsum("ij,ij->i", z, z) - logdet - 0.5 * n * np.log(2 * np.pi)
    return values, status


def se_predict_batch(X, R, Xs, inv_ls, sf2, sn2):
    """Marginal noisy-output predictive for every particle.

    Returns ``(mean, var, status)``; ``mean`` excludes the prior mean
    function, which the caller adds.
    """
    X = np.ascontiguousarray(X, dtype=float)
    Xs = np.ascontiguousarray(Xs, dtype=float)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    N, n = R.shape
    m = Xs.shape[0]
    prior_var = np.broadcast_to((sf2 + sn2)[:, None], (N, m)).copy()
    if n == 0:
        return np.zeros((N, m)), prior_var, np.zeros(N, dtype=np.int64)
    K = _gram_stack(X, X, inv_ls, sf2)
    K[:, np.arange(n), np.arange(n)] += sn2[:, None]
    L, status = _factor_stack(K)
    Ks = _gram_stack(X, Xs, inv_ls, sf2)
    mean = np.full((N, m), np.nan)
    var = np.full((N, m), np.nan)
    ok = status >= 0
    if ok.any():
        Lo = L[ok]
        z = np.linalg.solve(Lo, R[ok][:, :, None])
        V = np.linalg.solve(Lo, Ks[ok])
        mean[ok] = np.einsum("inm,in->im", V, z[:, :, 0])
        var[ok] = prior_var[ok] - np.einsum("inm,inm->im", V, V)
    return mean, var, status


def systematic_resample(weights, u):
    """Offspring indices for systematic resampling with offset ``u`` in [0, 1)."""
    w = np.asarray(weights, dtype=float)
    N = w.shape[0]
    positions = (u + np.arange(N)) / N
    idx = np.searchsorted(np.cumsum(w), positions, side="right")
    return np.minimum(idx, N - 1).astype(np.int64)
