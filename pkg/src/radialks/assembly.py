"""Discrete operators: the per-l eigenpencil (H, M) and the Hartree system.

All integrals use the mesh's Gauss rule, whose points are strictly interior,
so the 1/r and 1/r^2 factors are never evaluated at the origin.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .mesh import RadialMesh


class BandedMatrix:
    """Square matrix stored by diagonals, ``ab[p + i - j, j] == A[i, j]``."""

    def __init__(self, ab, p, symmetric=False):
        self.ab = np.ascontiguousarray(ab, dtype=float)
        self.p = int(p)
        self.symmetric = bool(symmetric)
        if self.ab.shape[0] != 2 * self.p + 1:
            raise ValueError("band storage has the wrong number of diagonals")

    @classmethod
    def from_dense(cls, a, p=None, symmetric=None):
        a = np.asarray(a, dtype=float)
        n = a.shape[0]
        if p is None:
            i, j = np.nonzero(a)
            p = int(np.max(np.abs(i - j))) if len(i) else 0
        ab = np.zeros((2 * p + 1, n))
        for d in range(-p, p + 1):
            # diagonal A[i, i + d]
            if d >= 0:
                ab[p - d, d:] = np.diagonal(a, d)
            else:
                ab[p - d, : n + d] = np.diagonal(a, d)
        if symmetric is None:
            symmetric = np.array_equal(a, a.T)
        return cls(ab, p, symmetric)

    @property
    def n(self):
        return self.ab.shape[1]

    @property
    def shape(self):
        return (self.n, self.n)

    def matvec(self, x):
        return kernels.band_matvec(self.ab, self.p, x)

    def rmatvec(self, x):
        if self.symmetric:
            return self.matvec(x)
        return kernels.band_rmatvec(self.ab, self.p, x)

    def __matmul__(self, x):
        return self.matvec(x)

    def diagonal(self):
        return self.ab[self.p].copy()

    def todense(self):
        n, p = self.n, self.p
        a = np.zeros((n, n))
        for d in range(-p, p + 1):
            if d >= 0:
                idx = np.arange(n - d)
                a[idx, idx + d] = self.ab[p - d, d:]
            else:
                idx = np.arange(-d, n)
                a[idx, idx + d] = self.ab[p - d, : n + d]
        return a

    def combine(self, alpha, other, beta):
        """alpha * self + beta * other (same band layout)."""
        if other.p != self.p or other.n != self.n:
            raise ValueError("band layouts differ")
        return BandedMatrix(alpha * self.ab + beta * other.ab, self.p, self.symmetric and other.symmetric)

    def submatrix(self, lo, hi):
        """Principal block rows/cols lo..hi-1, with couplings to removed DOFs dropped."""
        ab = self.ab[:, lo:hi].copy()
        n = hi - lo
        p = self.p
        for d in range(-p, p + 1):
            row = ab[p - d]
            if d > 0:
                row[:d] = 0.0
            elif d < 0:
                row[n + d :] = 0.0
        return BandedMatrix(ab, p, self.symmetric)

    def column(self, j):
        """Dense column j."""
        n, p = self.n, self.p
        col = np.zeros(n)
        lo, hi = max(0, j - p), min(n, j + p + 1)
        i = np.arange(lo, hi)
        col[i] = self.ab[p + i - j, j]
        return col


def _scatter(mesh: RadialMesh, local):
    p = mesh.order
    ab = np.zeros((2 * p + 1, mesh.n_dofs))
    return kernels.scatter_band(ab, p, np.ascontiguousarray(local))


def _to_quad(mesh: RadialMesh, values, what):
    values = np.asarray(values, dtype=float)
    shape_q = mesh.quad_points.shape
    if values.shape == shape_q:
        return values
    if values.shape == (mesh.n_dofs,):
        return mesh.at_quad(values)
    raise ValueError(
        f"{what} must be given at quadrature points {shape_q} or nodes ({mesh.n_dofs},), got {values.shape}"
    )


def local_mass(mesh: RadialMesh, weight=None):
    """Element matrices of sum_q w_q J weight(r_q) phi_a phi_b."""
    phi = mesh.basis.shape_values
    wq = mesh.quad_weights if weight is None else mesh.quad_weights * weight
    loc = np.einsum("eq,qa,qb->eab", wq, phi, phi)
    return 0.5 * (loc + loc.transpose(0, 2, 1))


def local_stiffness(mesh: RadialMesh):
    dphi = mesh.basis.shape_derivs
    w = mesh.basis.quadrature.weights
    loc = np.einsum("q,qa,qb->ab", w, dphi, dphi)[None, :, :] / mesh.jacobians[:, None, None]
    return 0.5 * (loc + loc.transpose(0, 2, 1))


def assemble_mass(mesh: RadialMesh, apply_bc=True):
    m = BandedMatrix(_scatter(mesh, local_mass(mesh)), mesh.order, symmetric=True)
    return m.submatrix(1, mesh.n_dofs - 1) if apply_bc else m


def assemble_laplacian(mesh: RadialMesh, apply_bc=True):
    """Stiffness matrix L_ij = int phi_i' phi_j' dr (kinetic operator is L/2)."""
    k = BandedMatrix(_scatter(mesh, local_stiffness(mesh)), mesh.order, symmetric=True)
    return k.submatrix(1, mesh.n_dofs - 1) if apply_bc else k


def assemble_centrifugal(mesh: RadialMesh, l: int, apply_bc=True):
    """Mass matrix weighted by l(l+1)/(2 r^2)."""
    if int(l) != l or l < 0:
        raise ValueError(f"angular momentum must be a non-negative integer, got {l!r}")
    r = mesh.quad_points
    c = BandedMatrix(_scatter(mesh, local_mass(mesh, l * (l + 1) / (2.0 * r * r))), mesh.order, symmetric=True)
    return c.submatrix(1, mesh.n_dofs - 1) if apply_bc else c


def assemble_eigensystem(mesh: RadialMesh, veff, l: int, apply_bc=True):
    """Hamiltonian and mass matrices of the radial equation for channel ``l``.

    ``veff`` is sampled at the quadrature points (shape ``(n_ele, n_q)``) or
    given nodally. With ``apply_bc`` the DOFs at r = 0 and r = R are removed,
    which imposes P(0) = P(R) = 0.
    """
    if int(l) != l or l < 0:
        raise ValueError(f"angular momentum must be a non-negative integer, got {l!r}")
    v = _to_quad(mesh, veff, "veff")
    r = mesh.quad_points
    pot = v + l * (l + 1) / (2.0 * r * r)
    loc_h = 0.5 * local_stiffness(mesh) + local_mass(mesh, pot)
    loc_m = local_mass(mesh)
    h = BandedMatrix(_scatter(mesh, 0.5 * (loc_h + loc_h.transpose(0, 2, 1))), mesh.order, symmetric=True)
    m = BandedMatrix(_scatter(mesh, loc_m), mesh.order, symmetric=True)
    if apply_bc:
        n = mesh.n_dofs
        return h.submatrix(1, n - 1), m.submatrix(1, n - 1)
    return h, m


def quadrature_integral(mesh: RadialMesh, f, weight="1"):
    """sum over elements and Gauss points of w J f(r) * weight(r).

    ``weight`` is one of ``"1"``, ``"r"``, ``"r2"``.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != mesh.quad_points.shape:
        raise ValueError(f"integrand must be sampled at quadrature points {mesh.quad_points.shape}, got {f.shape}")
    r = mesh.quad_points
    if weight in ("1", 1, None):
        g = f
    elif weight == "r":
        g = f * r
    elif weight in ("r2", "r^2", "r²"):
        g = f * r * r
    else:
        raise ValueError(f"unknown weight {weight!r}")
    return float(np.sum(mesh.quad_weights * g))


@dataclass
class HartreeSystem:
    """Reduced Hartree system: the DOF at r = R is eliminated with the
    Dirichlet value; the origin carries the natural condition V'(0) = 0."""

    matrix: BandedMatrix
    rhs: np.ndarray
    boundary_value: float
    full_matrix: BandedMatrix

    def expand(self, reduced_solution):
        return np.append(np.asarray(reduced_solution, dtype=float), self.boundary_value)


def assemble_hartree(mesh: RadialMesh, rho, charge=None) -> HartreeSystem:
    """Weak form of V'' + (2/r) V' = -4 pi rho.

    A_ij = int phi_i' phi_j' - (2/r) phi_i phi_j' dr,  b_i = int 4 pi rho phi_i dr,
    with V(R) = charge / R. ``charge`` defaults to 4 pi int rho r^2 dr.
    """
    rho_q = _to_quad(mesh, rho, "rho")
    if np.min(rho_q) < -1e-12:
        raise ValueError("density has negative values")
    if charge is None:
        charge = 4.0 * np.pi * quadrature_integral(mesh, rho_q, "r2")
    phi = mesh.basis.shape_values
    dphi = mesh.basis.shape_derivs
    w = mesh.basis.quadrature.weights
    r = mesh.quad_points
    stiff = np.einsum("q,qa,qb->ab", w, dphi, dphi)[None, :, :] / mesh.jacobians[:, None, None]
    # J cancels against d/dr = (1/J) d/dt in the first-order term
    first = np.einsum("q,eq,qa,qb->eab", w, 2.0 / r, phi, dphi)
    a_full = BandedMatrix(_scatter(mesh, stiff - first), mesh.order, symmetric=False)
    b = np.einsum("eq,qa->ea", 4.0 * np.pi * rho_q * mesh.quad_weights, phi)
    b_full = np.zeros(mesh.n_dofs)
    np.add.at(b_full, mesh.dofmap, b)
    g = charge / mesh.R
    n = mesh.n_dofs
    rhs = b_full[: n - 1] - a_full.column(n - 1)[: n - 1] * g
    return HartreeSystem(a_full.submatrix(0, n - 1), rhs, g, a_full)
