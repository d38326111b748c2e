# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Same signatures and semantics as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

cdef enum:
    _CONVERGED = 0
    _MAXIT = 1
    _BREAKDOWN = 2

CONVERGED = _CONVERGED
MAXIT = _MAXIT
BREAKDOWN = _BREAKDOWN


cdef void _matvec1(const double[:, ::1] ab, int p, const double[::1] x, double[::1] y) noexcept nogil:
    cdef Py_ssize_t n = ab.shape[1]
    cdef Py_ssize_t i, j, jlo, jhi
    cdef double s
    for i in range(n):
        jlo = i - p if i - p > 0 else 0
        jhi = i + p + 1 if i + p + 1 < n else n
        s = 0.0
        for j in range(jlo, jhi):
            s += ab[p + i - j, j] * x[j]
        y[i] = s


cdef void _rmatvec1(const double[:, ::1] ab, int p, const double[::1] x, double[::1] y) noexcept nogil:
    cdef Py_ssize_t n = ab.shape[1]
    cdef Py_ssize_t i, j, ilo, ihi
    cdef double s
    for j in range(n):
        ilo = j - p if j - p > 0 else 0
        ihi = j + p + 1 if j + p + 1 < n else n
        s = 0.0
        for i in range(ilo, ihi):
            s += ab[p + i - j, j] * x[i]
        y[j] = s


def band_matvec(ab, int p, x):
    cdef const double[:, ::1] A = np.ascontiguousarray(ab, dtype=np.float64)
    xa = np.asarray(x, dtype=np.float64)
    cdef Py_ssize_t k
    if xa.ndim == 1:
        y = np.empty_like(xa)
        _matvec1(A, p, np.ascontiguousarray(xa), y)
        return y
    xt = np.ascontiguousarray(xa.T)
    yt = np.empty_like(xt)
    for k in range(xt.shape[0]):
        _matvec1(A, p, xt[k], yt[k])
    return np.ascontiguousarray(yt.T)


def band_rmatvec(ab, int p, x):
    cdef const double[:, ::1] A = np.ascontiguousarray(ab, dtype=np.float64)
    xa = np.asarray(x, dtype=np.float64)
    cdef Py_ssize_t k
    if xa.ndim == 1:
        y = np.empty_like(xa)
        _rmatvec1(A, p, np.ascontiguousarray(xa), y)
        return y
    xt = np.ascontiguousarray(xa.T)
    yt = np.empty_like(xt)
    for k in range(xt.shape[0]):
        _rmatvec1(A, p, xt[k], yt[k])
    return np.ascontiguousarray(yt.T)


def scatter_band(double[:, ::1] ab, int p, const double[:, :, ::1] local):
    cdef Py_ssize_t e, a, b, i, j, g0
    cdef Py_ssize_t n_ele = local.shape[0]
    for e in range(n_ele):
        g0 = e * p
        for a in range(p + 1):
            i = g0 + a
            for b in range(p + 1):
                j = g0 + b
                ab[p + i - j, j] += local[e, a, b]
    return np.asarray(ab)


def thomas(sub, diag, sup, rhs):
    cdef const double[::1] lo = np.ascontiguousarray(sub, dtype=np.float64)
    cdef const double[::1] dg = np.ascontiguousarray(diag, dtype=np.float64)
    cdef const double[::1] up = np.ascontiguousarray(sup, dtype=np.float64)
    cdef const double[::1] f = np.ascontiguousarray(rhs, dtype=np.float64)
    cdef Py_ssize_t n = dg.shape[0]
    cdef Py_ssize_t i
    cdef double piv
    c_arr = np.empty(n)
    d_arr = np.empty(n)
    x_arr = np.empty(n)
    cdef double[::1] c = c_arr
    cdef double[::1] d = d_arr
    cdef double[::1] x = x_arr
    piv = dg[0]
    if piv == 0.0:
        return None
    c[0] = up[0] / piv if n > 1 else 0.0
    d[0] = f[0] / piv
    for i in range(1, n):
        piv = dg[i] - lo[i - 1] * c[i - 1]
        if piv == 0.0:
            return None
        if i < n - 1:
            c[i] = up[i] / piv
        d[i] = (f[i] - lo[i - 1] * d[i - 1]) / piv
    x[n - 1] = d[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x_arr


cdef double _dot(const double[::1] a, const double[::1] b) noexcept nogil:
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(a.shape[0]):
        s += a[i] * b[i]
    return s


def bicg(ab, int p, b, x0, double tol, int maxit):
    cdef const double[:, ::1] A = np.ascontiguousarray(ab, dtype=np.float64)
    cdef const double[::1] bb = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = bb.shape[0]
    cdef Py_ssize_t i
    cdef int it = 0, status = _MAXIT
    cdef double bnorm = sqrt(_dot(bb, bb))
    cdef double res, best_res, rho, rho_new, denom, alpha, beta

    if bnorm == 0.0:
        return np.zeros(n), 0, CONVERGED, 0.0

    x_arr = np.array(x0, dtype=np.float64)
    cdef double[::1] x = x_arr
    best_arr = np.empty(n)
    cdef double[::1] best = best_arr
    cdef double[::1] r = np.empty(n)
    cdef double[::1] rt = np.empty(n)
    cdef double[::1] d = np.empty(n)
    cdef double[::1] dt = np.empty(n)
    cdef double[::1] q = np.empty(n)
    cdef double[::1] qt = np.empty(n)

    _matvec1(A, p, x, q)
    for i in range(n):
        r[i] = bb[i] - q[i]
        rt[i] = r[i]
        d[i] = r[i]
        dt[i] = r[i]
        best[i] = x[i]
    res = sqrt(_dot(r, r)) / bnorm
    best_res = res
    if res < tol:
        return x_arr, 0, CONVERGED, res
    rho = _dot(rt, r)
    with nogil:
        while it < maxit:
            it += 1
            _matvec1(A, p, d, q)
            _rmatvec1(A, p, dt, qt)
            denom = _dot(dt, q)
            if denom == 0.0 or rho == 0.0:
                status = _BREAKDOWN
                break
            alpha = rho / denom
            for i in range(n):
                x[i] += alpha * d[i]
                r[i] -= alpha * q[i]
                rt[i] -= alpha * qt[i]
            res = sqrt(_dot(r, r)) / bnorm
            if res < best_res:
                best_res = res
                for i in range(n):
                    best[i] = x[i]
            if res < tol:
                status = _CONVERGED
                break
            rho_new = _dot(rt, r)
            beta = rho_new / rho
            rho = rho_new
            for i in range(n):
                d[i] = r[i] + beta * d[i]
                dt[i] = rt[i] + beta * dt[i]
    return best_arr, it, status, best_res
