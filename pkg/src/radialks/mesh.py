"""Radial finite-element mesh on [0, R] and the moving-mesh machinery.

Only element boundaries move. Interior nodes of each element sit at the
affinely mapped Gauss-Lobatto points, so a mesh is fully described by its
boundaries, the element order and the quadrature size.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .errors import SingularMatrixError
from .quadrature import derivative_table, lagrange_tables, lobatto_basis

DEFAULT_MONITOR_ALPHA = 0.01
# additive floor (1/bohr) of the derivative monitor; sets the share of
# elements spent on the nearly empty outer region
DEFAULT_MONITOR_FLOOR = 0.02
MONITOR_MAX_ORDER = 5
MONITOR_KINDS = ("derivative", "arclength")
# sub-intervals per element when integrating the derivative monitor
MONITOR_SUBDIVISIONS = 8


@dataclass(frozen=True, eq=False)
class RadialMesh:
    boundaries: np.ndarray
    order: int
    n_quad: int | None = None

    def __post_init__(self):
        b = np.array(self.boundaries, dtype=float)
        if b.ndim != 1 or len(b) < 2:
            raise ValueError("a mesh needs at least two boundaries")
        if b[0] != 0.0:
            raise ValueError("the first boundary must be r = 0")
        if not np.all(np.diff(b) > 0):
            raise ValueError("boundaries must be strictly increasing")
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"element order must be >= 1, got {self.order!r}")
        b.setflags(write=False)
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "order", int(self.order))

    @property
    def R(self):
        return float(self.boundaries[-1])

    @property
    def n_ele(self):
        return len(self.boundaries) - 1

    @property
    def n_dofs(self):
        return self.n_ele * self.order + 1

    @cached_property
    def basis(self):
        return lobatto_basis(self.order, self.n_quad)

    @cached_property
    def lengths(self):
        return np.diff(self.boundaries)

    @cached_property
    def jacobians(self):
        """dr/dt for each element (half the element length)."""
        return 0.5 * self.lengths

    @cached_property
    def dofmap(self):
        """Global DOF indices of each element, shape (n_ele, p+1)."""
        p = self.order
        return np.arange(self.n_ele)[:, None] * p + np.arange(p + 1)[None, :]

    @cached_property
    def nodes(self):
        """Physical coordinates of all global DOFs."""
        t = self.basis.nodes
        x = np.empty(self.n_dofs)
        a = self.boundaries[:-1]
        local = a[:, None] + self.jacobians[:, None] * (t[None, :] + 1.0)
        x[self.dofmap] = local
        # interface nodes were written twice; pin them to the exact boundaries
        x[:: self.order] = self.boundaries
        return x

    @cached_property
    def quad_points(self):
        """Physical quadrature abscissae, shape (n_ele, n_q)."""
        t = self.basis.quadrature.points
        return self.boundaries[:-1, None] + self.jacobians[:, None] * (t[None, :] + 1.0)

    @cached_property
    def quad_weights(self):
        """Physical quadrature weights (reference weight times Jacobian)."""
        return self.jacobians[:, None] * self.basis.quadrature.weights[None, :]

    def same_space(self, other):
        return (
            self.order == other.order
            and self.n_ele == other.n_ele
            and np.array_equal(self.boundaries, other.boundaries)
            and self.basis.quadrature.points.shape == other.basis.quadrature.points.shape
        )

    def locate(self, x):
        """Index of the element containing each physical point."""
        x = np.asarray(x, dtype=float)
        e = np.searchsorted(self.boundaries, x, side="right") - 1
        return np.clip(e, 0, self.n_ele - 1)

    def to_reference(self, x, e):
        a = self.boundaries[e]
        return np.clip((x - a) / self.jacobians[e] - 1.0, -1.0, 1.0)

    def evaluate(self, coeffs, x, derivative=False):
        """Evaluate an FE function (or a block of them, columns) at physical
        points ``x``. With ``derivative=True`` returns d/dr."""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[0] != self.n_dofs:
            raise ValueError(f"FE vector has {coeffs.shape[0]} entries, mesh has {self.n_dofs} DOFs")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x < -1e-12) or np.any(x > self.R * (1 + 1e-12)):
            raise ValueError("evaluation point outside [0, R]")
        e = self.locate(x)
        t = self.to_reference(x, e)
        vals, ders = lagrange_tables(self.basis.nodes, t)
        table = ders / self.jacobians[e][:, None] if derivative else vals
        local = coeffs[self.dofmap[e]]
        if coeffs.ndim == 1:
            return np.einsum("ij,ij->i", table, local)
        return np.einsum("ij,ijk->ik", table, local)

    def at_quad(self, coeffs):
        """FE function values at every quadrature point, shape (n_ele, n_q[, k])."""
        local = np.asarray(coeffs, dtype=float)[self.dofmap]
        return np.einsum("qj,ej...->eq...", self.basis.shape_values, local)

    def deriv_at_quad(self, coeffs):
        local = np.asarray(coeffs, dtype=float)[self.dofmap]
        d = np.einsum("qj,ej...->eq...", self.basis.shape_derivs, local)
        jac = self.jacobians.reshape((-1, 1) + (1,) * (d.ndim - 2))
        return d / jac

    def with_boundaries(self, boundaries):
        return RadialMesh(boundaries, self.order, self.n_quad)


def uniform_mesh(R: float, n_ele: int, p: int, n_quad: int | None = None) -> RadialMesh:
    """Equally spaced elements on [0, R]."""
    if not R > 0:
        raise ValueError(f"domain radius must be positive, got {R!r}")
    if int(n_ele) != n_ele or n_ele < 1:
        raise ValueError(f"element count must be >= 1, got {n_ele!r}")
    b = np.linspace(0.0, float(R), int(n_ele) + 1)
    return RadialMesh(b, p, n_quad)


@dataclass(frozen=True)
class MonitorSamples:
    """One monitor value per element: the midpoint value for the arc-length
    monitor, the cell average for the derivative monitor. ``alpha`` is the
    regularization that produced them (alpha, or the floor)."""

    values: np.ndarray
    alpha: float = DEFAULT_MONITOR_ALPHA


def _coefficient_columns(orbitals):
    cols = []
    for orb in orbitals:
        coeffs = getattr(orb, "coeffs", orb)
        if getattr(orb, "occupation", 1.0) <= 0.0:
            continue
        cols.append(np.asarray(coeffs, dtype=float))
    return cols


def monitor_from_orbitals(orbitals, mesh: RadialMesh, alpha: float = DEFAULT_MONITOR_ALPHA) -> MonitorSamples:
    """sqrt(alpha + sum of squared orbital slopes) at each element midpoint.

    ``orbitals`` may hold objects with ``coeffs`` (and ``occupation``)
    attributes or bare FE vectors; unoccupied orbitals are skipped.
    """
    if not alpha > 0:
        raise ValueError("monitor regularization alpha must be positive")
    cols = _coefficient_columns(orbitals)
    if not cols:
        raise ValueError("monitor needs at least one occupied orbital")
    block = np.column_stack(cols)
    mid = 0.5 * (mesh.boundaries[:-1] + mesh.boundaries[1:])
    slopes = mesh.evaluate(block, mid, derivative=True)
    return MonitorSamples(np.sqrt(alpha + np.sum(slopes**2, axis=1)), float(alpha))


def _derivative_order(mesh, order):
    q = min(mesh.order, MONITOR_MAX_ORDER) if order is None else int(order)
    if not 1 <= q <= mesh.order:
        raise ValueError(f"derivative order must lie in 1..{mesh.order}, got {order!r}")
    return q


def monitor_cumulative(orbitals, mesh: RadialMesh, order: int | None = None, floor: float = DEFAULT_MONITOR_FLOOR, subdivisions: int = MONITOR_SUBDIVISIONS):
    """Running integral of the derivative monitor
    m(r) = floor + (sum_nl (d^q P_nl / dr^q)^2)^(1/2q).

    Each element is split into ``subdivisions`` equal pieces, each integrated
    with the element's Gauss rule. Returns the piece boundaries ``x`` and
    the integral ``F`` of m from 0 to each of them.
    """
    if not floor > 0:
        raise ValueError("monitor floor must be positive")
    q = _derivative_order(mesh, order)
    cols = _coefficient_columns(orbitals)
    if not cols:
        raise ValueError("monitor needs at least one occupied orbital")
    block = np.column_stack(cols)
    rule = mesh.basis.quadrature
    s = int(subdivisions)
    # reference points of s sub-intervals of [-1, 1], each with the Gauss rule
    edges = np.linspace(-1.0, 1.0, s + 1)
    t = (0.5 * (edges[:-1] + edges[1:])[:, None] + (1.0 / s) * rule.points[None, :]).ravel()
    w = np.tile(rule.weights / s, s)
    table = derivative_table(mesh.basis.nodes, t, q)
    local = block[mesh.dofmap]  # (n_ele, p+1, k)
    d = np.einsum("qa,eak->eqk", table, local) / mesh.jacobians[:, None, None] ** q
    m = floor + np.sum(d * d, axis=2) ** (0.5 / q)
    piece = (m * w[None, :]).reshape(mesh.n_ele, s, -1).sum(axis=2) * mesh.jacobians[:, None]
    F = np.concatenate(([0.0], np.cumsum(piece.ravel())))
    b = mesh.boundaries
    x = (b[:-1, None] + (b[1:] - b[:-1])[:, None] * (np.arange(s) / s)[None, :]).ravel()
    return np.append(x, mesh.R), F


def derivative_monitor(orbitals, mesh: RadialMesh, order: int | None = None, floor: float = DEFAULT_MONITOR_FLOOR) -> MonitorSamples:
    """Cell averages of floor + (sum_nl (d^q P_nl / dr^q)^2)^(1/2q).

    The q-th root turns each derivative into an inverse length, so for
    P ~ exp(-k r) the monitor is ~k whatever q is; q = 1 is the arc-length
    monitor. Higher q follows the interpolation error of degree-p elements,
    which grows with the high derivatives. The default is q = min(p, 5):
    beyond that the derivatives of coarse-mesh orbitals are mostly noise.
    """
    x, F = monitor_cumulative(orbitals, mesh, order, floor)
    cells = np.diff(np.interp(mesh.boundaries, x, F))
    return MonitorSamples(cells / mesh.lengths, float(floor))


def equidistribute_cumulative(mesh: RadialMesh, x, F) -> RadialMesh:
    """Boundaries splitting a monotone running integral ``F(x)`` into
    ``mesh.n_ele`` equal parts (linear inversion between samples)."""
    x = np.asarray(x, dtype=float)
    F = np.asarray(F, dtype=float)
    if x.shape != F.shape or x[0] != 0.0 or not np.isclose(x[-1], mesh.R):
        raise ValueError("running integral must be sampled on [0, R]")
    if not np.all(np.diff(F) > 0):
        raise ValueError("monitor integral must be strictly increasing")
    new = np.interp(np.linspace(0.0, F[-1], mesh.n_ele + 1), F, x)
    new[0], new[-1] = 0.0, mesh.R
    return mesh.with_boundaries(new)


def thomas_solve(sub, diag, sup, rhs):
    """Solve a tridiagonal system; ``sub``/``sup`` have length n-1."""
    diag = np.asarray(diag, dtype=float)
    n = len(diag)
    sub = np.asarray(sub, dtype=float)
    sup = np.asarray(sup, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if len(sub) != n - 1 or len(sup) != n - 1 or len(rhs) != n:
        raise ValueError("inconsistent tridiagonal system sizes")
    x = kernels.thomas(sub, diag, sup, rhs)
    if x is None:
        raise SingularMatrixError("zero pivot in tridiagonal elimination")
    return x


def equidistribute_step(mesh: RadialMesh, monitor: MonitorSamples) -> RadialMesh:
    """One linearized solve of (M x_xi)_xi = 0 with x(0)=0, x(1)=R.

    The monitor is frozen at the current element midpoints; only the element
    boundaries move.
    """
    m = np.asarray(getattr(monitor, "values", monitor), dtype=float)
    if m.shape != (mesh.n_ele,):
        raise ValueError(f"monitor has {m.shape} samples, mesh has {mesh.n_ele} elements")
    if not np.all(m > 0) or not np.all(np.isfinite(m)):
        raise ValueError("monitor values must be positive and finite")
    n = mesh.n_ele
    if n == 1:
        return mesh
    # unknowns x_1..x_{n-1}; row i: -M_{i-1/2} x_{i-1} + (M_{i-1/2}+M_{i+1/2}) x_i - M_{i+1/2} x_{i+1} = 0
    left = m[:-1]
    right = m[1:]
    diag = left + right
    sub = -left[1:]
    sup = -right[:-1]
    rhs = np.zeros(n - 1)
    rhs[-1] = right[-1] * mesh.R
    interior = thomas_solve(sub, diag, sup, rhs)
    b = np.concatenate(([0.0], interior, [mesh.R]))
    if not np.all(np.diff(b) > 0):
        raise RuntimeError("equidistribution produced a non-monotone mesh")
    return mesh.with_boundaries(b)


def equidistribute(mesh: RadialMesh, monitor: MonitorSamples) -> RadialMesh:
    """Boundaries that split the monitor integral into equal parts.

    The monitor is taken as piecewise constant on the current cells, so the
    cumulative integral is piecewise linear and is inverted exactly. This is
    the fixed point of repeated ``equidistribute_step`` solves with that
    frozen monitor, reached in one go.
    """
    m = np.asarray(getattr(monitor, "values", monitor), dtype=float)
    if m.shape != (mesh.n_ele,):
        raise ValueError(f"monitor has {m.shape} samples, mesh has {mesh.n_ele} elements")
    if not np.all(m > 0) or not np.all(np.isfinite(m)):
        raise ValueError("monitor values must be positive and finite")
    b = mesh.boundaries
    F = np.concatenate(([0.0], np.cumsum(m * mesh.lengths)))
    new = np.interp(np.linspace(0.0, F[-1], len(b)), F, b)
    new[0], new[-1] = 0.0, mesh.R
    return mesh.with_boundaries(new)


def redistribute(mesh: RadialMesh, orbitals, kind="derivative", alpha=DEFAULT_MONITOR_ALPHA, order=None, floor=DEFAULT_MONITOR_FLOOR):
    """One mesh update from the current orbitals.

    ``"derivative"``: derivative monitor, integrated as a function of r and
    equidistributed exactly.
    ``"arclength"``: sqrt(alpha + sum P'^2) at midpoints, one tridiagonal solve.
    """
    if kind == "derivative":
        return equidistribute_cumulative(mesh, *monitor_cumulative(orbitals, mesh, order, floor))
    if kind == "arclength":
        return equidistribute_step(mesh, monitor_from_orbitals(orbitals, mesh, alpha))
    raise ValueError(f"unknown monitor {kind!r}; expected one of {MONITOR_KINDS}")


def max_boundary_shift(old: RadialMesh, new: RadialMesh):
    """Largest relative move of an interior boundary."""
    if old.n_ele != new.n_ele:
        raise ValueError("meshes have different element counts")
    if old.n_ele == 1:
        return 0.0
    a, b = old.boundaries[1:-1], new.boundaries[1:-1]
    return float(np.max(np.abs(b - a) / np.minimum(a, b)))


def interpolate_solution(old: RadialMesh, coeffs, new: RadialMesh):
    """Transfer FE vectors (1-D or column block) from ``old`` to ``new`` by
    nodal evaluation; values at r = 0 and r = R carry over exactly."""
    if not np.isclose(old.R, new.R, rtol=0, atol=1e-12 * max(1.0, old.R)):
        raise ValueError(f"meshes cover different domains ({old.R} vs {new.R})")
    if old.order != new.order:
        raise ValueError("meshes use different element orders")
    coeffs = np.asarray(coeffs, dtype=float)
    if old.same_space(new):
        return coeffs.copy()
    out = old.evaluate(coeffs, new.nodes)
    out[0] = coeffs[0]
    out[-1] = coeffs[-1]
    return out


def monitor_cell_integrals(mesh: RadialMesh, monitor: MonitorSamples):
    """Midpoint-rule integral of the monitor over each element."""
    return np.asarray(monitor.values) * mesh.lengths


def write_mesh_history(path, meshes):
    """Dump boundaries of successive meshes as ``step,boundary_index,x``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "boundary_index", "x"])
        for step, m in enumerate(meshes):
            for i, x in enumerate(m.boundaries):
                w.writerow([step, i, repr(float(x))])
