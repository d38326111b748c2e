"""Pure-Python/numpy versions of the hot kernels.

These mirror ``_ckernels.pyx`` one to one and are used when the compiled
extension is unavailable or ``RADIALKS_PURE_PYTHON=1`` is set.

Band storage follows the LAPACK/scipy convention: for half-bandwidth ``p``,
``ab[p + i - j, j] == A[i, j]``.
"""
import numpy as np

# BiCG status codes shared with the compiled kernel
CONVERGED = 0
MAXIT = 1
BREAKDOWN = 2


def band_matvec(ab, p, x):
    n = ab.shape[1]
    x = np.asarray(x, dtype=float)
    y = np.zeros_like(x)
    for d in range(-p, p + 1):
        # diagonal d holds A[i, i + d], stored in row p - d
        row = ab[p - d]
        if d >= 0:
            coef = row[d:n]
            if x.ndim == 1:
                y[: n - d] += coef * x[d:]
            else:
                y[: n - d] += coef[:, None] * x[d:]
        else:
            coef = row[: n + d]
            if x.ndim == 1:
                y[-d:] += coef * x[: n + d]
            else:
                y[-d:] += coef[:, None] * x[: n + d]
    return y


def band_rmatvec(ab, p, x):
    """A^T x from band storage."""
    n = ab.shape[1]
    x = np.asarray(x, dtype=float)
    y = np.zeros_like(x)
    for d in range(-p, p + 1):
        row = ab[p - d]
        # (A^T x)_j = sum_i A[i, j] x_i with j = i + d
        if d >= 0:
            coef = row[d:n]
            if x.ndim == 1:
                y[d:] += coef * x[: n - d]
            else:
                y[d:] += coef[:, None] * x[: n - d]
        else:
            coef = row[: n + d]
            if x.ndim == 1:
                y[: n + d] += coef * x[-d:]
            else:
                y[: n + d] += coef[:, None] * x[-d:]
    return y


def scatter_band(ab, p, local):
    """Accumulate element matrices ``local[e]`` of size (p+1, p+1) into band
    storage; element e owns global DOFs e*p .. e*p + p."""
    n_ele = local.shape[0]
    for e in range(n_ele):
        g0 = e * p
        for a in range(p + 1):
            i = g0 + a
            for b in range(p + 1):
                j = g0 + b
                ab[p + i - j, j] += local[e, a, b]
    return ab


def thomas(sub, diag, sup, rhs):
    n = len(diag)
    c = np.empty(n)
    d = np.empty(n)
    piv = diag[0]
    if piv == 0.0:
        return None
    c[0] = sup[0] / piv if n > 1 else 0.0
    d[0] = rhs[0] / piv
    for i in range(1, n):
        piv = diag[i] - sub[i - 1] * c[i - 1]
        if piv == 0.0:
            return None
        if i < n - 1:
            c[i] = sup[i] / piv
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / piv
    x = np.empty(n)
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x


def bicg(ab, p, b, x0, tol, maxit):
    """Unpreconditioned BiCG on a banded matrix.

    Returns ``(x, iterations, status, relative_residual)``; ``x`` is the
    iterate with the smallest residual seen.
    """
    b = np.asarray(b, dtype=float)
    x = np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), 0, CONVERGED, 0.0
    r = b - band_matvec(ab, p, x)
    rt = r.copy()
    res = np.linalg.norm(r) / bnorm
    best_x, best_res = x.copy(), res
    if res < tol:
        return x, 0, CONVERGED, res
    d = r.copy()
    dt = rt.copy()
    rho = rt @ r
    it = 0
    status = MAXIT
    while it < maxit:
        it += 1
        q = band_matvec(ab, p, d)
        qt = band_rmatvec(ab, p, dt)
        denom = dt @ q
        if denom == 0.0 or rho == 0.0:
            status = BREAKDOWN
            break
        alpha = rho / denom
        x += alpha * d
        r -= alpha * q
        rt -= alpha * qt
        res = np.linalg.norm(r) / bnorm
        if res < best_res:
            best_x, best_res = x.copy(), res
        if res < tol:
            status = CONVERGED
            break
        rho_new = rt @ r
        beta = rho_new / rho
        rho = rho_new
        d = r + beta * d
        dt = rt + beta * dt
    return best_x, it, status, best_res
