# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: batched SE-kernel likelihoods and predictives.

Same contracts as ``_pykernels``. Each particle's Gram matrix is built in a
column-major scratch buffer and factored with LAPACK ``dpotrf`` through
scipy's Cython bindings, so there is no Python overhead per particle.
"""
import numpy as np

from libc.math cimport exp, log, M_PI
from libc.stdlib cimport malloc, free
from libc.string cimport memcpy
from scipy.linalg.cython_lapack cimport dpotrf
from scipy.linalg.cython_blas cimport dtrsv

NAME = "compiled"

JITTER_LEVELS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)

cdef double[8] _JITTER = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4]
cdef int _N_JITTER = 8


cdef inline double _se(const double[:, ::1] A, Py_ssize_t i,
                       const double[:, ::1] B, Py_ssize_t j,
                       const double[:, ::1] il, Py_ssize_t p,
                       Py_ssize_t d, double sf2) noexcept nogil:
    cdef double q = 0.0, t
    cdef Py_ssize_t k
    for k in range(d):
        t = (A[i, k] - B[j, k]) * il[p, k]
        q += t * t
    return sf2 * exp(-0.5 * q)


cdef void _gram(const double[:, ::1] X, const double[:, ::1] il, Py_ssize_t p,
                Py_ssize_t n, Py_ssize_t d, double sf2, double sn2,
                double* K) noexcept nogil:
    # lower triangle, column-major
    cdef Py_ssize_t i, j
    for j in range(n):
        K[j + j * n] = sf2 + sn2
        for i in range(j + 1, n):
            K[i + j * n] = _se(X, i, X, j, il, p, d, sf2)


cdef int _factor(double* Kbase, double* L, int n, double scale) noexcept nogil:
    """Jittered Cholesky into ``L``; returns the jitter level or -1."""
    cdef int level, info, i
    cdef char uplo = b'L'
    for level in range(_N_JITTER):
        memcpy(L, Kbase, n * n * sizeof(double))
        if level > 0:
            for i in range(n):
                L[i + i * n] += _JITTER[level] * scale
        dpotrf(&uplo, &n, L, &n, &info)
        if info == 0:
            return level
    return -1


cdef void _trsolve(double* L, double* v, int n) noexcept nogil:
    cdef char uplo = b'L'
    cdef char trans = b'N'
    cdef char diag = b'N'
    cdef int inc = 1
    dtrsv(&uplo, &trans, &diag, &n, L, &n, v, &inc)


def se_kernel(A, B, inv_ls, double sf2):
    cdef const double[:, ::1] Av = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[:, ::1] Bv = np.ascontiguousarray(B, dtype=np.float64)
    cdef const double[:, ::1] il = np.ascontiguousarray(
        np.asarray(inv_ls, dtype=np.float64).reshape(1, -1))
    cdef Py_ssize_t nA = Av.shape[0], nB = Bv.shape[0], d = il.shape[1]
    out = np.empty((nA, nB))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(nA):
            for j in range(nB):
                o[i, j] = _se(Av, i, Bv, j, il, 0, d, sf2)
    return out


def se_loglik_batch(X, R, inv_ls, sf2, sn2):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] Rv = np.ascontiguousarray(np.atleast_2d(R), dtype=np.float64)
    cdef const double[:, ::1] il = np.ascontiguousarray(inv_ls, dtype=np.float64)
    cdef const double[::1] f2 = np.ascontiguousarray(sf2, dtype=np.float64)
    cdef const double[::1] e2 = np.ascontiguousarray(sn2, dtype=np.float64)
    cdef Py_ssize_t N = Rv.shape[0], n = Rv.shape[1], d = Xv.shape[1]
    values = np.zeros(N)
    status = np.zeros(N, dtype=np.int64)
    if n == 0:
        return values, status
    cdef double[::1] val = values
    cdef long long[::1] st = status
    cdef double* Kb = <double*> malloc(n * n * sizeof(double))
    cdef double* L = <double*> malloc(n * n * sizeof(double))
    cdef double* z = <double*> malloc(n * sizeof(double))
    cdef Py_ssize_t p, i
    cdef int level
    cdef double quad, logdet
    cdef double c = 0.5 * n * log(2.0 * M_PI)
    if Kb == NULL or L == NULL or z == NULL:
        free(Kb); free(L); free(z)
        raise MemoryError()
    try:
        with nogil:
            for p in range(N):
                _gram(Xv, il, p, n, d, f2[p], e2[p], Kb)
                level = _factor(Kb, L, <int> n, f2[p] + e2[p])
                st[p] = level
                if level < 0:
                    val[p] = 0.0 / 0.0
                    continue
                for i in range(n):
                    z[i] = Rv[p, i]
                _trsolve(L, z, <int> n)
                quad = 0.0
                logdet = 0.0
                for i in range(n):
                    quad += z[i] * z[i]
                    logdet += log(L[i + i * n])
                val[p] = -0.5 * quad - logdet - c
    finally:
        free(Kb); free(L); free(z)
    return values, status


def se_predict_batch(X, R, Xs, inv_ls, sf2, sn2):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] Rv = np.ascontiguousarray(np.atleast_2d(R), dtype=np.float64)
    cdef const double[:, ::1] Sv = np.ascontiguousarray(Xs, dtype=np.float64)
    cdef const double[:, ::1] il = np.ascontiguousarray(inv_ls, dtype=np.float64)
    cdef const double[::1] f2 = np.ascontiguousarray(sf2, dtype=np.float64)
    cdef const double[::1] e2 = np.ascontiguousarray(sn2, dtype=np.float64)
    cdef Py_ssize_t N = Rv.shape[0], n = Rv.shape[1], d = Xv.shape[1], m = Sv.shape[0]
    mean = np.zeros((N, m))
    var = np.empty((N, m))
    status = np.zeros(N, dtype=np.int64)
    cdef double[:, ::1] mu = mean
    cdef double[:, ::1] vv = var
    cdef long long[::1] st = status
    cdef Py_ssize_t p, i, s
    if n == 0:
        for p in range(N):
            for s in range(m):
                vv[p, s] = f2[p] + e2[p]
        return mean, var, status
    cdef double* Kb = <double*> malloc(n * n * sizeof(double))
    cdef double* L = <double*> malloc(n * n * sizeof(double))
    cdef double* z = <double*> malloc(n * sizeof(double))
    cdef double* v = <double*> malloc(n * sizeof(double))
    cdef int level
    cdef double acc_m, acc_v
    if Kb == NULL or L == NULL or z == NULL or v == NULL:
        free(Kb); free(L); free(z); free(v)
        raise MemoryError()
    try:
        with nogil:
            for p in range(N):
                _gram(Xv, il, p, n, d, f2[p], e2[p], Kb)
                level = _factor(Kb, L, <int> n, f2[p] + e2[p])
                st[p] = level
                if level < 0:
                    for s in range(m):
                        mu[p, s] = 0.0 / 0.0
                        vv[p, s] = 0.0 / 0.0
                    continue
                for i in range(n):
                    z[i] = Rv[p, i]
                _trsolve(L, z, <int> n)
                for s in range(m):
                    for i in range(n):
                        v[i] = _se(Xv, i, Sv, s, il, p, d, f2[p])
                    _trsolve(L, v, <int> n)
                    acc_m = 0.0
                    acc_v = 0.0
                    for i in range(n):
                        acc_m += v[i] * z[i]
                        acc_v += v[i] * v[i]
                    mu[p, s] = acc_m
                    vv[p, s] = f2[p] + e2[p] - acc_v
    finally:
        free(Kb); free(L); free(z); free(v)
    return mean, var, status


def systematic_resample(weights, double u):
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t N = w.shape[0]
    idx = np.empty(N, dtype=np.int64)
    cdef long long[::1] out = idx
    cdef Py_ssize_t i, j = 0
    cdef double cum, pos
    with nogil:
        cum = w[0]
        for i in range(N):
            pos = (u + i) / N
            while j < N - 1 and cum <= pos:
                j += 1
                cum += w[j]
            out[i] = j
    return idx
