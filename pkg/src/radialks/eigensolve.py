"""Iterative solvers for the banded operators.

``lobpcg`` finds the lowest eigenpairs of the pencil (H, M) with a
per-eigenpair shifted-Laplacian preconditioner applied by a few BiCG steps;
``bicg`` is also used for the Hartree system.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import kernels
from .assembly import BandedMatrix
from .errors import ConvergenceError

log = logging.getLogger(__name__)

PRECOND_MAXIT = 30
PRECOND_RTOL = 1e-2
# shifts are clamped to <= -SHIFT_FLOOR so T stays SPD while Ritz values are
# still positive (random starts); without this early iterations go unpreconditioned
SHIFT_FLOOR = 0.1
# residuals below this multiple of eps * ||H||_inf are roundoff
RESIDUAL_FLOOR_FACTOR = 100.0


def bicg(A: BandedMatrix, b, x0=None, tol=1e-12, maxit=None, raise_on_failure=False):
    """Biconjugate gradients on a banded matrix.

    Returns ``(x, info)`` in the scipy convention: ``info == 0`` on
    convergence, otherwise the number of iterations spent, in which case
    ``x`` is the best iterate seen. A breakdown restarts once from the
    current iterate; a second breakdown raises :class:`ConvergenceError`.
    """
    b = np.asarray(b, dtype=float)
    n = len(b)
    if A.n != n:
        raise ValueError(f"matrix is {A.n}x{A.n}, rhs has {n} entries")
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if maxit is None:
        maxit = 10 * n
    total = 0
    for attempt in range(2):
        x, it, status, res = kernels.bicg(A.ab, A.p, b, x, float(tol), int(maxit - total))
        total += it
        if status == kernels.CONVERGED:
            return x, 0
        if status == kernels.MAXIT or total >= maxit:
            break
        log.debug("BiCG breakdown after %d iterations (residual %.2e), restarting", total, res)
    else:
        raise ConvergenceError(f"BiCG broke down twice (relative residual {res:.3e})", partial=x)
    if raise_on_failure:
        raise ConvergenceError(f"BiCG did not reach {tol:g} in {maxit} iterations (residual {res:.3e})", partial=x)
    return x, max(total, 1)


@dataclass
class Preconditioner:
    """Block preconditioner built from T = L/2 + C - lambda M for each column.

    ``laplacian`` and ``mass`` are the reduced stiffness and mass matrices;
    ``centrifugal`` (optional) is the l(l+1)/(2 r^2) mass matrix C of the
    channel. Without it T is the bare shifted kinetic operator.
    Shifts above ``-SHIFT_FLOOR`` are clamped to it, so T is SPD. With
    ``method="direct"`` T is applied exactly by a banded Cholesky solve; with
    ``"bicg"`` by at most ``maxit`` BiCG steps to relative tolerance
    ``rtol``. With ``laplacian=None`` the whole operator is the identity.
    """

    laplacian: BandedMatrix | None
    mass: BandedMatrix | None
    maxit: int = PRECOND_MAXIT
    rtol: float = PRECOND_RTOL
    method: str = "direct"
    centrifugal: BandedMatrix | None = None

    def __post_init__(self):
        if self.method not in PRECOND_METHODS:
            raise ValueError(f"unknown preconditioner method {self.method!r}; expected one of {PRECOND_METHODS}")

    @classmethod
    def identity(cls):
        return cls(None, None)

    def operator(self, shift):
        t = self.laplacian.combine(0.5, self.mass, -shift)
        if self.centrifugal is not None:
            t = t.combine(1.0, self.centrifugal, 1.0)
        return t

    def scaled_operator(self, shift):
        """D T D with D = diag(T)^(-1/2), and D itself."""
        t = self.operator(shift)
        d = 1.0 / np.sqrt(t.diagonal())
        p, n = t.p, t.n
        ab = t.ab
        for off in range(-p, p + 1):
            row = ab[p - off]
            if off >= 0:
                row[off:] *= d[: n - off] * d[off:]
            else:
                row[: n + off] *= d[-off:] * d[: n + off]
        return t, d

    def apply(self, residuals, shifts):
        return apply_preconditioner(self, residuals, shifts)


PRECOND_METHODS = ("direct", "bicg")


def apply_preconditioner(precond: Preconditioner, residuals, shifts):
    """Apply (T^(i))^{-1} to each residual column.

    The BiCG variant runs on the Jacobi-scaled operator D T D, which keeps
    the capped iteration useful on meshes whose element sizes span several
    decades. Never fails: if BiCG stops early the best iterate is used.
    """
    residuals = np.asarray(residuals, dtype=float)
    single = residuals.ndim == 1
    block = residuals[:, None] if single else residuals
    shifts = np.broadcast_to(np.asarray(shifts, dtype=float), (block.shape[1],))
    if precond is None or precond.laplacian is None:
        return residuals.copy()
    out = np.empty_like(block)
    p = precond.laplacian.p
    for i in range(block.shape[1]):
        lam = min(shifts[i], -SHIFT_FLOOR)
        if precond.method == "direct":
            t = precond.operator(lam)
            c = scipy.linalg.cholesky_banded(t.ab[: p + 1], lower=False, check_finite=False)
            out[:, i] = scipy.linalg.cho_solve_banded((c, False), block[:, i], check_finite=False)
            continue
        t, d = precond.scaled_operator(lam)
        try:
            y, _ = bicg(t, d * block[:, i], tol=precond.rtol, maxit=precond.maxit)
        except ConvergenceError as exc:
            y = exc.partial
        out[:, i] = d * y
    return out[:, 0] if single else out


@dataclass
class EigenSolution:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residual_norms: np.ndarray
    iterations: int
    converged: bool = True
    # per-iteration residual norms and Ritz values, one row per iteration
    residual_history: list = field(default_factory=list, repr=False)
    eigenvalue_history: list = field(default_factory=list, repr=False)
    iterations_per_column: np.ndarray | None = None
    tolerance: float | None = None


def _m_orthonormalize(V, MV, drop_tol=1e-12):
    """Return a basis of span(V) that is M-orthonormal (SVQB with dropping),
    together with the transformation coefficients ``C`` with ``V @ C``."""
    G = V.T @ MV
    G = 0.5 * (G + G.T)
    d = np.sqrt(np.abs(np.diag(G)))
    d[d == 0] = 1.0
    Gs = G / d[:, None] / d[None, :]
    w, U = np.linalg.eigh(Gs)
    keep = w > drop_tol * max(w.max(), 1e-300)
    C = (U[:, keep] / np.sqrt(w[keep])[None, :]) / d[:, None]
    return C


def _rayleigh_ritz(S, HS, MS, k):
    C = _m_orthonormalize(S, MS)
    if C.shape[1] < k:
        raise np.linalg.LinAlgError("Rayleigh-Ritz basis lost rank")
    Hs = C.T @ (S.T @ HS) @ C
    Hs = 0.5 * (Hs + Hs.T)
    theta, Z = scipy.linalg.eigh(Hs)
    return theta[:k], C @ Z[:, :k]


def _initial_block(n, k, X0, rng):
    if X0 is None:
        return rng.standard_normal((n, k))
    X = np.array(X0, dtype=float).reshape(n, -1)
    if X.shape[1] < k:
        X = np.hstack([X, rng.standard_normal((n, k - X.shape[1]))])
    return X[:, :k]


def lobpcg(
    H: BandedMatrix,
    M: BandedMatrix,
    k: int,
    X0=None,
    precond: Preconditioner | None = None,
    tol: float = 1e-9,
    maxit: int = 500,
    guards: int = 0,
    seed: int = 0,
    raise_on_failure: bool = True,
) -> EigenSolution:
    """Lowest ``k`` eigenpairs of H x = lambda M x by LOBPCG.

    Converged when every wanted residual ||H x - lambda M x||_2 < ``tol``;
    converged columns are soft-locked (kept in the Ritz space, no new search
    directions). ``guards`` extra columns are iterated but not reported.
    The preconditioner shifts follow the current Ritz values.

    ``tol`` is raised to ``RESIDUAL_FLOOR_FACTOR * eps * ||H||_inf`` when it
    lies below that roundoff level (strongly graded meshes); the value used
    is reported as ``tolerance``.
    """
    n = H.n
    if not 1 <= k <= n:
        raise ValueError(f"cannot compute {k} eigenpairs of a {n}x{n} pencil")
    m = min(k + int(guards), n)
    h_norm = float(np.max(np.sum(np.abs(H.ab), axis=0)))
    tol = max(float(tol), RESIDUAL_FLOOR_FACTOR * np.finfo(float).eps * h_norm)
    rng = np.random.default_rng(seed)
    X = _initial_block(n, m, X0, rng)
    residual_history = []
    eigenvalue_history = []
    per_column = np.full(k, -1, dtype=int)

    restarts = 0
    MX = M.matvec(X)
    try:
        theta, C = _rayleigh_ritz(X, H.matvec(X), MX, m)
    except np.linalg.LinAlgError:
        X = rng.standard_normal((n, m))
        MX = M.matvec(X)
        theta, C = _rayleigh_ritz(X, H.matvec(X), MX, m)
        restarts += 1
    X = X @ C
    HX = H.matvec(X)
    MX = M.matvec(X)
    P = HP = MP = None

    it = 0
    while True:
        R = HX - MX * theta[None, :]
        norms = np.linalg.norm(R, axis=0)
        residual_history.append(norms[:k].copy())
        eigenvalue_history.append(theta[:k].copy())
        newly = (norms[:k] < tol) & (per_column < 0)
        per_column[newly] = it
        if np.all(norms[:k] < tol) or it >= maxit:
            break
        it += 1
        active = norms >= tol
        # guard columns only need to stay roughly ahead of the wanted ones
        active[k:] = norms[k:] >= tol
        W = R[:, active]
        if precond is not None and precond.laplacian is not None:
            W = apply_preconditioner(precond, W, theta[active])
        blocks = [X, W]
        hblocks = [HX, H.matvec(W)]
        mblocks = [MX, M.matvec(W)]
        if P is not None:
            blocks.append(P[:, active])
            hblocks.append(HP[:, active])
            mblocks.append(MP[:, active])
        S = np.hstack(blocks)
        HS = np.hstack(hblocks)
        MS = np.hstack(mblocks)
        try:
            theta_new, C = _rayleigh_ritz(S, HS, MS, m)
        except np.linalg.LinAlgError:
            if restarts >= 1:
                raise ConvergenceError("LOBPCG Rayleigh-Ritz broke down twice")
            restarts += 1
            log.debug("LOBPCG Rayleigh-Ritz breakdown; restarting without history")
            P = HP = MP = None
            S, HS, MS = np.hstack(blocks[:2]), np.hstack(hblocks[:2]), np.hstack(mblocks[:2])
            theta_new, C = _rayleigh_ritz(S, HS, MS, m)
        Xn = S @ C
        # new search direction: the non-X part of the update
        Cp = C.copy()
        Cp[:m] = 0.0
        P = S @ Cp
        HP = HS @ Cp
        MP = MS @ Cp
        X, HX, MX = Xn, HS @ C, MS @ C
        theta = theta_new

    # final M-orthonormalization against drift
    G = X.T @ MX
    L = np.linalg.cholesky(0.5 * (G + G.T))
    Linv = np.linalg.inv(L).T
    X = X @ Linv
    HX = HX @ Linv
    MX = MX @ Linv
    Hs = X.T @ HX
    theta, Z = np.linalg.eigh(0.5 * (Hs + Hs.T))
    X, HX, MX = X @ Z, HX @ Z, MX @ Z
    norms = np.linalg.norm(HX - MX * theta[None, :], axis=0)

    converged = bool(np.all(norms[:k] < tol) or np.all(per_column >= 0))
    sol = EigenSolution(
        eigenvalues=theta[:k],
        eigenvectors=X[:, :k],
        residual_norms=norms[:k],
        iterations=it,
        converged=converged,
        residual_history=residual_history,
        eigenvalue_history=eigenvalue_history,
        iterations_per_column=np.where(per_column >= 0, per_column, it),
        tolerance=tol,
    )
    if not converged and raise_on_failure:
        raise ConvergenceError(
            f"LOBPCG: {int(np.sum(norms[:k] >= tol))} of {k} eigenpairs above tol {tol:g} after {it} iterations",
            partial=sol,
        )
    return sol


def dense_eig_oracle(H, M):
    """Full spectrum of the pencil by dense reduction (test oracle)."""
    h = H.todense() if isinstance(H, BandedMatrix) else np.asarray(H, dtype=float)
    mm = M.todense() if isinstance(M, BandedMatrix) else np.asarray(M, dtype=float)
    if h.shape[0] > 2000:
        raise ValueError("dense oracle limited to dimension 2000")
    try:
        np.linalg.cholesky(mm)
    except np.linalg.LinAlgError:
        raise ValueError("mass matrix is not positive definite") from None
    return scipy.linalg.eigh(h, mm)


def write_iteration_trace(path, solutions, labels=None):
    """Write ``orbital,iteration,residual`` rows for one or more solves."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["orbital", "iteration", "residual"])
        for s_idx, sol in enumerate(solutions):
            for it, norms in enumerate(sol.residual_history):
                for j, r in enumerate(norms):
                    name = labels[s_idx][j] if labels else f"{s_idx}:{j}"
                    w.writerow([name, it, repr(float(r))])
