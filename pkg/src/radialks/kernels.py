"""Kernel backend selection.

The compiled Cython extension is used when it was built; otherwise (or when
``RADIALKS_PURE_PYTHON`` is set to a non-empty value other than ``0``) the
numpy implementations in ``_kernels_py`` take over.
"""
import os

from . import _kernels_py

_force_python = os.environ.get("RADIALKS_PURE_PYTHON", "") not in ("", "0")

try:
    if _force_python:
        raise ImportError("pure-Python backend requested")
    from . import _ckernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _kernels_py
    BACKEND = "python"

band_matvec = _impl.band_matvec
band_rmatvec = _impl.band_rmatvec
scatter_band = _impl.scatter_band
thomas = _impl.thomas
bicg = _impl.bicg

CONVERGED = _kernels_py.CONVERGED
MAXIT = _kernels_py.MAXIT
BREAKDOWN = _kernels_py.BREAKDOWN


def backends():
    """Map of available backend name -> module (for tests and benchmarks)."""
    out = {"python": _kernels_py}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
