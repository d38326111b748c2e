"""Self-consistent field driver and the outer moving-mesh loop.

Fields that enter integrals (density, potentials) are carried at the
quadrature points of the current mesh; nodal values are kept alongside for
output. Orbitals are full FE vectors including the zero end values.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .assembly import (
    assemble_centrifugal,
    assemble_eigensystem,
    assemble_hartree,
    assemble_laplacian,
    quadrature_integral,
)
from .atom_data import AtomConfig, L_LETTERS, orbitals_per_l
from .eigensolve import Preconditioner, bicg, lobpcg
from .errors import ConvergenceError, InvalidStateError
from .mesh import (
    DEFAULT_MONITOR_ALPHA,
    DEFAULT_MONITOR_FLOOR,
    RadialMesh,
    derivative_monitor,
    interpolate_solution,
    max_boundary_shift,
    monitor_cell_integrals,
    redistribute,
    uniform_mesh,
)
from .xc import VWN_C, xc_combine

log = logging.getLogger(__name__)

# weight of rho_out in the linear mixing; 1 - 0.618
MIXING_ALPHA = 0.382
# halve the mixing when |dE| sets no new minimum for this many iterations
STALL_WINDOW = 20
SCF_TOL = 1e-8
TF_ALPHA = 0.7280642371
TF_BETA = -0.5430794693
TF_GAMMA = 0.3612163121
FOUR_PI = 4.0 * np.pi
EIG_TOL_MAX = 1e-4
EIG_TOL_RATIO = 1e-2
# mesh pre-adaptation in the fixed starting potential
PREADAPT_MAXIT = 8
PREADAPT_RTOL = 0.05
PREADAPT_EIG_TOL = 1e-6
# relative spread of the per-cell monitor integrals accepted as equidistributed
MESH_SPREAD_TOL = 0.05


@dataclass
class Orbital:
    n: int
    l: int
    occupation: float
    eps: float
    coeffs: np.ndarray = field(repr=False)

    @property
    def label(self):
        return f"{self.n}{L_LETTERS[self.l]}"


@dataclass
class DensityField:
    """Radial density rho(r) on a mesh: quadrature-point and nodal samples."""

    mesh: RadialMesh
    quad: np.ndarray
    nodes: np.ndarray

    def charge(self):
        return FOUR_PI * quadrature_integral(self.mesh, self.quad, "r2")

    def scaled(self, factor):
        return DensityField(self.mesh, self.quad * factor, self.nodes * factor)


@dataclass
class EffectivePotential:
    """Potentials at quadrature points; ``har_nodes`` is the FE Hartree solution."""

    ext: np.ndarray
    har: np.ndarray
    xc: np.ndarray
    har_nodes: np.ndarray

    @property
    def total(self):
        return self.ext + self.har + self.xc


@dataclass
class EnergyBreakdown:
    kinetic: float
    hartree: float
    xc: float
    external: float

    @property
    def total(self):
        return self.kinetic + self.hartree + self.xc + self.external

    def as_dict(self):
        return {
            "E_k": self.kinetic,
            "E_Har": self.hartree,
            "E_xc": self.xc,
            "E_ext": self.external,
            "E_tot": self.total,
        }


@dataclass
class ScfState:
    mesh: RadialMesh
    orbitals: list
    energies: EnergyBreakdown | None
    rho_in: DensityField
    rho_out: DensityField
    rho_new: DensityField
    potential: EffectivePotential | None
    mixing: float
    tol: float
    iterations: int = 0
    converged: bool = False
    # rows of (iteration, E_tot, dE)
    energy_trace: list = field(default_factory=list)
    lobpcg_iterations: list = field(default_factory=list)
    mesh_history: list = field(default_factory=list)
    scf_iterations_per_step: list = field(default_factory=list)
    outer_energy_trace: list = field(default_factory=list)
    wall_time: float = 0.0
    # leading entries of mesh_history produced before the first SCF
    preadapt_steps: int = 0
    # eigensolver results of the last SCF iteration, by l
    eigensolutions: dict = field(default_factory=dict, repr=False)

    @property
    def total_energy(self):
        return self.energies.total

    @property
    def eigenvalues(self):
        return np.array([o.eps for o in self.orbitals])

    def sorted_orbitals(self):
        return sorted(self.orbitals, key=lambda o: o.eps)

    @property
    def moving_mesh_steps(self):
        """Mesh updates made between SCF solves."""
        return max(len(self.mesh_history) - 1 - self.preadapt_steps, 0)


# ---------------------------------------------------------------- densities


def _tf_potential(Z, r):
    x = r * np.cbrt(128.0 * Z / (9.0 * np.pi**2))
    sx = np.sqrt(x)
    zeff = Z * (1.0 + TF_ALPHA * sx + TF_BETA * x * np.exp(-TF_GAMMA * sx)) ** 2 * np.exp(-2.0 * TF_ALPHA * sx)
    return -zeff / r


def thomas_fermi_density(Z: int, mesh: RadialMesh) -> DensityField:
    """Screened-nucleus Thomas-Fermi starting density, normalized to ``Z``.

    rho_0 = (-2V)^(3/2) / (3 pi^2); it diverges like r^(-3/2) at the origin,
    so the nodal value there is copied from the first positive node.
    """
    if int(Z) != Z or Z < 1:
        raise ValueError(f"nuclear charge must be a positive integer, got {Z!r}")

    def rho_at(r):
        m = np.maximum(-2.0 * _tf_potential(Z, r), 0.0)
        return m**1.5 / (3.0 * np.pi**2)

    quad = rho_at(mesh.quad_points)
    nodes = np.empty(mesh.n_dofs)
    nodes[1:] = rho_at(mesh.nodes[1:])
    nodes[0] = nodes[1]
    rho = DensityField(mesh, quad, nodes)
    return rho.scaled(Z / rho.charge())


def _orbital_block(orbitals):
    return np.column_stack([o.coeffs for o in orbitals]), np.array([o.occupation for o in orbitals])


def density_update(orbitals, mesh: RadialMesh, norm_tol=1e-6) -> DensityField:
    """rho = sum_nl f_nl P_nl^2 / (4 pi r^2)."""
    if not orbitals:
        raise ValueError("no orbitals")
    block, occ = _orbital_block(orbitals)
    pq = mesh.at_quad(block)
    norms = np.sum(mesh.quad_weights[:, :, None] * pq * pq, axis=(0, 1))
    bad = np.abs(norms - 1.0) > norm_tol
    if np.any(bad):
        labels = [o.label for o, b in zip(orbitals, bad) if b]
        raise InvalidStateError(f"orbitals not normalized: {labels} (norms {norms[bad]})")
    r = mesh.quad_points
    quad = np.einsum("eqk,k->eq", pq * pq, occ) / (FOUR_PI * r * r)
    x = mesh.nodes
    nodes = np.zeros(mesh.n_dofs)
    nodes[1:] = (block[1:] ** 2 @ occ) / (FOUR_PI * x[1:] ** 2)
    # r -> 0: only l = 0 survives, (P/r)^2 -> P'(0)^2
    slopes = mesh.evaluate(block, np.array([0.0]), derivative=True)[0]
    lzero = np.array([o.l == 0 for o in orbitals])
    nodes[0] = np.sum(occ[lzero] * slopes[lzero] ** 2) / FOUR_PI
    return DensityField(mesh, quad, nodes)


def mix_density(rho_in: DensityField, rho_out: DensityField, alpha: float) -> DensityField:
    """Linear mixing rho_new = alpha rho_out + (1 - alpha) rho_in."""
    if not 0 < alpha <= 1:
        raise ValueError(f"mixing parameter must lie in (0, 1], got {alpha!r}")
    if not rho_in.mesh.same_space(rho_out.mesh):
        raise ValueError("densities live on different meshes")
    return DensityField(
        rho_in.mesh,
        alpha * rho_out.quad + (1.0 - alpha) * rho_in.quad,
        alpha * rho_out.nodes + (1.0 - alpha) * rho_in.nodes,
    )


# ---------------------------------------------------------------- potentials


def solve_hartree(rho: DensityField, charge=None, method="direct", tol=1e-13):
    """Nodal Hartree potential from the FE Poisson system.

    ``method="direct"`` factors the banded system (LU with partial
    pivoting); ``"bicg"`` iterates to relative residual ``tol`` and finishes
    with the direct solve if BiCG stalls.
    """
    if method not in ("direct", "bicg"):
        raise ValueError(f"unknown Hartree solver {method!r}")
    mesh = rho.mesh
    system = assemble_hartree(mesh, rho.quad, charge=charge)
    a = system.matrix
    if method == "bicg":
        x, info = bicg(a, system.rhs, tol=tol, maxit=20 * len(system.rhs))
        if info == 0:
            return system.expand(x)
        log.debug("Hartree BiCG did not reach %.1e; using banded LU", tol)
    x = scipy.linalg.solve_banded((a.p, a.p), a.ab, system.rhs, check_finite=False)
    return system.expand(x)


def build_effective_potential(rho: DensityField, Z, mesh: RadialMesh | None = None, xc_c=VWN_C, interacting=True):
    """V_eff = -Z/r + V_Har + V_xc at the quadrature points."""
    mesh = rho.mesh if mesh is None else mesh
    r = mesh.quad_points
    ext = -Z / r
    if not interacting:
        zero = np.zeros_like(r)
        return EffectivePotential(ext, zero, zero.copy(), np.zeros(mesh.n_dofs))
    har_nodes = solve_hartree(rho, charge=float(Z))
    har = mesh.at_quad(har_nodes)
    xc = xc_combine(np.maximum(rho.quad, 0.0), c=xc_c)
    return EffectivePotential(ext, har, xc.v_xc, har_nodes)


def total_energy(orbitals, rho: DensityField, veff, vhar, Z, mesh: RadialMesh | None = None, xc_c=VWN_C, interacting=True):
    """Energy terms for orbitals computed in potential ``veff``.

    ``rho`` is the density built from ``orbitals``; ``vhar`` its Hartree
    potential, both at quadrature points.
    """
    mesh = rho.mesh if mesh is None else mesh
    band = sum(o.occupation * o.eps for o in orbitals)
    ekin = band - FOUR_PI * quadrature_integral(mesh, veff * rho.quad, "r2")
    eext = -FOUR_PI * Z * quadrature_integral(mesh, rho.quad, "r")
    if not interacting:
        return EnergyBreakdown(ekin, 0.0, 0.0, eext)
    ehar = 2.0 * np.pi * quadrature_integral(mesh, vhar * rho.quad, "r2")
    exc = FOUR_PI * quadrature_integral(mesh, xc_combine(np.maximum(rho.quad, 0.0), c=xc_c).eps_xc * rho.quad, "r2")
    return EnergyBreakdown(ekin, ehar, exc, eext)


def double_counting_energy(orbitals, rho_out, pot_in, vhar_out, xc_c=VWN_C):
    """Total energy from the band sum with double-counting corrections:
    sum f eps - int (V_H,in + V_xc,in) rho + E_H[rho] + E_xc[rho]."""
    mesh = rho_out.mesh
    w = mesh.quad_weights * mesh.quad_points**2 * FOUR_PI
    rho = rho_out.quad
    eps_xc = xc_combine(np.maximum(rho, 0.0), c=xc_c).eps_xc
    band = float(np.sum([o.occupation * o.eps for o in orbitals]))
    return band + float(np.sum(w * rho * (0.5 * vhar_out - pot_in.har - pot_in.xc + eps_xc)))


# ---------------------------------------------------------------- eigenproblems


def _fix_sign(vec, rel=1e-6):
    big = np.abs(vec) > rel * np.max(np.abs(vec))
    first = np.argmax(big)
    return -vec if vec[first] < 0 else vec


def m_orthonormalize(block, mass):
    """Gram-Schmidt in the M inner product (via Cholesky of the Gram matrix)."""
    g = block.T @ mass.matvec(block)
    L = np.linalg.cholesky(0.5 * (g + g.T))
    return scipy.linalg.solve_triangular(L, block.T, lower=True).T


def solve_channels(mesh, veff, counts, guesses=None, tol=1e-9, maxit=1000, seed=0, precondition=True, guards=0):
    """Lowest eigenpairs per channel. Returns {l: (eigenvalues, full FE vectors, EigenSolution)}.

    ``precondition`` is True (shifted kinetic plus centrifugal operator),
    ``"kinetic"`` (shifted kinetic operator only) or False.
    """
    out = {}
    lap = assemble_laplacian(mesh) if precondition else None
    for l, k in counts.items():
        h, m = assemble_eigensystem(mesh, veff, l)
        x0 = None
        if guesses is not None and l in guesses:
            x0 = m_orthonormalize(guesses[l][1:-1], m)
        pc = None
        if precondition:
            cent = assemble_centrifugal(mesh, l) if l > 0 and precondition != "kinetic" else None
            pc = Preconditioner(lap, m, centrifugal=cent)
        try:
            sol = lobpcg(h, m, k, X0=x0, precond=pc, tol=tol, maxit=maxit, seed=seed + l, guards=guards)
        except ConvergenceError:
            if x0 is None:
                raise
            # a poor warm start can trap the block; retry once from scratch
            log.info("LOBPCG stalled from the previous orbitals (l=%d); restarting from a random block", l)
            sol = lobpcg(h, m, k, X0=None, precond=pc, tol=tol, maxit=maxit, seed=seed + l + 1000, guards=guards)
        vecs = np.zeros((mesh.n_dofs, k))
        vecs[1:-1] = sol.eigenvectors
        for j in range(k):
            vecs[:, j] = _fix_sign(vecs[:, j])
        out[l] = (sol.eigenvalues, vecs, sol)
    return out


def _orbitals_from_channels(config: AtomConfig, channels):
    orbitals = []
    for l, (eigs, vecs, _) in channels.items():
        for j, shell in enumerate(config.shells_for(l)):
            orbitals.append(Orbital(shell.n, l, shell.occupation, float(eigs[j]), vecs[:, j].copy()))
    orbitals.sort(key=lambda o: (o.n, o.l))
    return orbitals


def _guesses_from_orbitals(orbitals):
    by_l = {}
    for o in sorted(orbitals, key=lambda o: o.n):
        by_l.setdefault(o.l, []).append(o.coeffs)
    return {l: np.column_stack(v) for l, v in by_l.items()}


# ---------------------------------------------------------------- SCF


def scf_solve(
    config: AtomConfig,
    mesh: RadialMesh,
    tol: float = SCF_TOL,
    maxit: int = 200,
    mixing: float = MIXING_ALPHA,
    rho0: DensityField | None = None,
    orbitals0=None,
    eig_tol: float = 1e-9,
    eigval_tol: float | None = None,
    xc_c: float = VWN_C,
    interacting: bool = True,
    seed: int = 0,
    precondition: bool | str = True,
    raise_on_failure: bool = True,
    adaptive_eig_tol: bool = True,
) -> ScfState:
    """Algorithm: potential from rho_in -> per-l eigenproblems -> rho_out ->
    mix -> energy, until |E_new - E_old| < tol.

    ``eigval_tol`` (default ``tol``) additionally requires the largest
    eigenvalue change between iterations to fall below it. With
    ``adaptive_eig_tol`` the eigensolver tolerance follows the last energy
    change (clipped to ``[eig_tol, EIG_TOL_MAX]``), so early iterations are
    cheap; convergence is only declared on an iteration solved at ``eig_tol``.
    """
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    eigval_tol = tol if eigval_tol is None else eigval_tol
    t0 = time.perf_counter()
    Z = config.Z
    counts = orbitals_per_l(config)
    rho_new = thomas_fermi_density(Z, mesh) if rho0 is None else rho0
    guesses = _guesses_from_orbitals(orbitals0) if orbitals0 else None

    state = ScfState(mesh, [], None, rho_new, rho_new, rho_new, None, mixing, tol)
    e_old = None
    eigs_old = None
    rising = 0
    best_de, since_best = np.inf, 0
    alpha = mixing
    last_de = None
    for it in range(1, maxit + 1):
        rho_in = rho_new
        pot = build_effective_potential(rho_in, Z, mesh, xc_c=xc_c, interacting=interacting)
        # loose eigensolves while the density is far from self-consistent
        tol_it = eig_tol
        if interacting and last_de is not None and adaptive_eig_tol:
            tol_it = max(eig_tol, min(EIG_TOL_MAX, EIG_TOL_RATIO * last_de))
        elif interacting and adaptive_eig_tol:
            tol_it = EIG_TOL_MAX
        channels = solve_channels(mesh, pot.total, counts, guesses, tol=tol_it, seed=seed, precondition=precondition)
        guesses = {l: v[1] for l, v in channels.items()}
        orbitals = _orbitals_from_channels(config, channels)
        rho_out = density_update(orbitals, mesh)
        rho_new = mix_density(rho_in, rho_out, alpha)
        if interacting:
            vhar_out = mesh.at_quad(solve_hartree(rho_out, charge=float(Z)))
        else:
            vhar_out = np.zeros_like(mesh.quad_points)
        energies = total_energy(orbitals, rho_out, pot.total, vhar_out, Z, mesh, xc_c=xc_c, interacting=interacting)
        e_new = energies.total
        eigs = np.array([o.eps for o in orbitals])
        de = np.inf if e_old is None else abs(e_new - e_old)
        deig = np.inf if eigs_old is None else float(np.max(np.abs(eigs - eigs_old)))
        state.energy_trace.append((it, e_new, de))
        state.lobpcg_iterations.append({l: c[2].iterations for l, c in channels.items()})
        log.debug("SCF %3d  E = %.10f  dE = %.3e  deps = %.3e", it, e_new, de, deig)
        state.orbitals, state.energies = orbitals, energies
        state.rho_in, state.rho_out, state.rho_new, state.potential = rho_in, rho_out, rho_new, pot
        state.iterations = it
        state.eigensolutions = {l: c[2] for l, c in channels.items()}
        if not interacting:
            # fixed potential: one eigen-solve is the answer
            state.converged = True
            break
        if de < tol and deig < eigval_tol and tol_it <= eig_tol:
            state.converged = True
            break
        if last_de is not None and de > last_de:
            rising += 1
        else:
            rising = 0
        if de < best_de:
            best_de, since_best = de, 0
        else:
            since_best += 1
        # rising 5 times in a row, or cycling without progress
        if rising >= 5 or since_best >= STALL_WINDOW:
            alpha *= 0.5
            rising, since_best, best_de = 0, 0, de
            log.info("SCF energy change is not decreasing; mixing reduced to %.4f", alpha)
        last_de = de
        e_old, eigs_old = e_new, eigs
    state.mixing = alpha
    state.wall_time = time.perf_counter() - t0
    if not state.converged and raise_on_failure:
        raise ConvergenceError(f"SCF did not converge in {maxit} iterations", partial=state)
    return state


# ---------------------------------------------------------------- moving mesh


def transfer_orbitals(orbitals, old: RadialMesh, new: RadialMesh):
    """Interpolate orbitals to ``new`` and re-orthonormalize each channel."""
    moved = []
    by_l = {}
    for o in orbitals:
        by_l.setdefault(o.l, []).append(o)
    for l, group in by_l.items():
        group = sorted(group, key=lambda o: o.n)
        block = interpolate_solution(old, np.column_stack([o.coeffs for o in group]), new)
        block[0] = 0.0
        block[-1] = 0.0
        _, m = assemble_eigensystem(new, np.zeros_like(new.quad_points), l, apply_bc=True)
        inner = m_orthonormalize(block[1:-1], m)
        block[1:-1] = inner
        for j, o in enumerate(group):
            moved.append(replace(o, coeffs=block[:, j].copy()))
    moved.sort(key=lambda o: (o.n, o.l))
    return moved


def preadapt_mesh(
    config: AtomConfig,
    mesh: RadialMesh,
    max_steps: int = PREADAPT_MAXIT,
    rtol: float = PREADAPT_RTOL,
    xc_c: float = VWN_C,
    interacting: bool = True,
    seed: int = 0,
    **monitor,
):
    """Adapt the mesh to the orbitals of the fixed starting potential
    (Thomas-Fermi, or bare -Z/r when non-interacting).

    Each step is one set of eigensolves and no SCF, so a coarse uniform mesh
    is brought close to the atom's length scales cheaply. Stops once no
    interior boundary moves by more than ``rtol`` (relative). Returns the
    mesh sequence (starting with ``mesh``) and the last orbitals,
    interpolated onto the final mesh.
    """
    counts = orbitals_per_l(config)
    history = [mesh]
    orbitals = None
    for _ in range(max_steps):
        rho = thomas_fermi_density(config.Z, mesh)
        pot = build_effective_potential(rho, config.Z, mesh, xc_c=xc_c, interacting=interacting)
        guesses = _guesses_from_orbitals(orbitals) if orbitals else None
        channels = solve_channels(mesh, pot.total, counts, guesses, tol=PREADAPT_EIG_TOL, seed=seed)
        orbitals = _orbitals_from_channels(config, channels)
        new = redistribute(mesh, orbitals, **monitor)
        shift = max_boundary_shift(mesh, new)
        orbitals = transfer_orbitals(orbitals, mesh, new)
        mesh = new
        history.append(mesh)
        log.debug("pre-adaptation step %d: largest boundary shift %.3f", len(history) - 1, shift)
        if shift < rtol:
            break
    return history, orbitals


def equidistribution_spread(mesh: RadialMesh, orbitals, order=None, floor=DEFAULT_MONITOR_FLOOR):
    """(max - min) / mean of the derivative-monitor integrals over the cells."""
    cells = monitor_cell_integrals(mesh, derivative_monitor(orbitals, mesh, order, floor))
    return float(np.ptp(cells) / np.mean(cells))


def moving_mesh_solve(
    config: AtomConfig,
    R: float,
    n_ele: int,
    p: int,
    tol: float = SCF_TOL,
    max_steps: int = 10,
    monitor: str = "derivative",
    monitor_alpha: float = DEFAULT_MONITOR_ALPHA,
    monitor_order: int | None = None,
    monitor_floor: float = DEFAULT_MONITOR_FLOOR,
    mesh_tol: float | None = MESH_SPREAD_TOL,
    preadapt: bool = True,
    n_quad: int | None = None,
    mesh: RadialMesh | None = None,
    raise_on_failure: bool = True,
    **scf_kwargs,
) -> ScfState:
    """Uniform mesh -> [pre-adaptation] -> SCF -> {monitor -> redistribute
    -> interpolate -> SCF} until the total energy changes by less than
    ``tol`` between meshes and, for the derivative monitor, the per-cell
    monitor integrals on the current mesh differ by less than ``mesh_tol``
    (relative spread; ``None`` checks the energy only).

    ``monitor`` selects the mesh update (see :func:`radialks.mesh.redistribute`).
    """
    t0 = time.perf_counter()
    mesh = uniform_mesh(R, n_ele, p, n_quad) if mesh is None else mesh
    scf_kwargs.setdefault("tol", tol)
    mon = dict(kind=monitor, alpha=monitor_alpha, order=monitor_order, floor=monitor_floor)
    history = [mesh]
    orbitals0 = None
    if preadapt:
        history, orbitals0 = preadapt_mesh(
            config,
            mesh,
            xc_c=scf_kwargs.get("xc_c", VWN_C),
            interacting=scf_kwargs.get("interacting", True),
            seed=scf_kwargs.get("seed", 0),
            **mon,
        )
        mesh = history[-1]
    n_pre = len(history) - 1
    per_step, outer = [], []

    def finish(state, converged):
        state.mesh_history = list(history)
        state.preadapt_steps = n_pre
        state.scf_iterations_per_step = list(per_step)
        state.outer_energy_trace = list(outer)
        state.converged = state.converged and converged
        state.wall_time = time.perf_counter() - t0
        return state

    def solve(mesh, **kw):
        try:
            st = scf_solve(config, mesh, raise_on_failure=raise_on_failure, **kw, **scf_kwargs)
        except ConvergenceError as exc:
            # report the meshes visited so far with the failed SCF state
            per_step.append(exc.partial.iterations)
            outer.append(exc.partial.total_energy)
            finish(exc.partial, False)
            raise
        per_step.append(st.iterations)
        outer.append(st.total_energy)
        return st

    def mesh_settled(mesh, orbitals):
        if mesh_tol is None or monitor != "derivative":
            return True
        spread = equidistribution_spread(mesh, orbitals, monitor_order, monitor_floor)
        log.info("monitor spread on the current mesh: %.3f", spread)
        return spread < mesh_tol

    state = solve(mesh, orbitals0=orbitals0)
    e_new = state.total_energy
    converged = False
    for _ in range(max_steps):
        e_old = e_new
        new_mesh = redistribute(mesh, state.orbitals, **mon)
        orbitals = transfer_orbitals(state.orbitals, mesh, new_mesh)
        rho0 = density_update(orbitals, new_mesh)
        rho0 = rho0.scaled(config.Z / rho0.charge())
        history.append(new_mesh)
        state = solve(new_mesh, rho0=rho0, orbitals0=orbitals)
        mesh = new_mesh
        e_new = state.total_energy
        log.info("moving mesh step %d: E = %.10f  dE = %.3e", len(outer) - 1, e_new, abs(e_new - e_old))
        if abs(e_new - e_old) < tol and mesh_settled(mesh, state.orbitals):
            converged = True
            break
    finish(state, converged)
    if not converged and raise_on_failure:
        raise ConvergenceError(f"moving mesh did not settle in {max_steps} steps", partial=state)
    return state


# ---------------------------------------------------------------- output


def write_energy_trace(path, state: ScfState):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "E_tot", "dE"])
        for it, e, de in state.energy_trace:
            w.writerow([it, repr(float(e)), "" if not np.isfinite(de) else repr(float(de))])


def write_orbitals(path, state: ScfState):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "l", "f", "eps"])
        for o in state.orbitals:
            w.writerow([o.n, o.l, repr(float(o.occupation)), repr(float(o.eps))])
