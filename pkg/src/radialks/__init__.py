"""Radial Kohn-Sham LDA solver for neutral atoms (Z = 1..92) using
high-order finite elements on a moving mesh."""

__version__ = "0.1.0"

from .atom_data import AtomConfig, configuration
from .errors import ConvergenceError, InvalidStateError, RadialKSError, SingularMatrixError
from .kernels import BACKEND
from .mesh import RadialMesh, uniform_mesh
from .scf import EnergyBreakdown, ScfState, moving_mesh_solve, scf_solve

__all__ = [
    "AtomConfig",
    "BACKEND",
    "ConvergenceError",
    "EnergyBreakdown",
    "InvalidStateError",
    "RadialKSError",
    "RadialMesh",
    "ScfState",
    "SingularMatrixError",
    "configuration",
    "moving_mesh_solve",
    "scf_solve",
    "uniform_mesh",
]
