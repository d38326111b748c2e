"""LDA exchange-correlation: Slater exchange plus VWN paramagnetic correlation.

Energies are per electron (Hartree); potentials are d(rho * eps)/d rho.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VWN_A = 0.0621814
VWN_B = 3.72744
VWN_C = 12.9352
# value printed in some sources; selectable for comparison runs
VWN_C_ALT = 12.8352
VWN_X0 = -0.10498

# densities below this are treated as vacuum
RHO_FLOOR = 1e-30


def _as_density(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("density must be non-negative")
    return rho


def slater_exchange(rho):
    """Return (eps_x, v_x) for a density (scalar or array)."""
    rho = _as_density(rho)
    live = rho > RHO_FLOOR
    eps = np.zeros_like(rho)
    eps[live] = -3.0 / (4.0 * np.pi) * np.cbrt(3.0 * np.pi**2 * rho[live])
    return eps, 4.0 / 3.0 * eps


def _vwn_terms(x, b, c, x0):
    X = x * x + b * x + c
    X0 = x0 * x0 + b * x0 + c
    Q = np.sqrt(4.0 * c - b * b)
    atan = np.arctan(Q / (2.0 * x + b))
    eps = (
        np.log(x * x / X)
        + 2.0 * b / Q * atan
        - b * x0 / X0 * (np.log((x - x0) ** 2 / X) + 2.0 * (b + 2.0 * x0) / Q * atan)
    )
    den = (2.0 * x + b) ** 2 + Q * Q
    deps_dx = 2.0 / x - (2.0 * x + b) / X - 4.0 * b / den - b * x0 / X0 * (
        2.0 / (x - x0) - (2.0 * x + b) / X - 4.0 * (b + 2.0 * x0) / den
    )
    return eps, deps_dx


def vwn_correlation(rho, c=VWN_C):
    """Return (eps_c, v_c) of the VWN paramagnetic fit.

    ``c`` selects the fit constant; the default is the standard 12.9352.
    """
    rho = _as_density(rho)
    live = rho > RHO_FLOOR
    eps = np.zeros_like(rho)
    v = np.zeros_like(rho)
    rs = np.cbrt(3.0 / (4.0 * np.pi * rho[live]))
    x = np.sqrt(rs)
    e, de = _vwn_terms(x, VWN_B, c, VWN_X0)
    a = 0.5 * VWN_A
    eps[live] = a * e
    # rho d/drho = -(rs/3) d/drs = -(x/6) d/dx
    v[live] = a * (e - x * de / 6.0)
    return eps, v


@dataclass(frozen=True)
class XcEval:
    eps_x: np.ndarray
    eps_c: np.ndarray
    v_x: np.ndarray
    v_c: np.ndarray

    @property
    def eps_xc(self):
        return self.eps_x + self.eps_c

    @property
    def v_xc(self):
        return self.v_x + self.v_c


def xc_combine(rho, c=VWN_C) -> XcEval:
    ex, vx = slater_exchange(rho)
    ec, vc = vwn_correlation(rho, c=c)
    return XcEval(ex, ec, vx, vc)
