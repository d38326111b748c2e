"""Reference-element machinery on [-1, 1].

Gauss-Legendre rules for integration and nodal Lagrange bases on the
Gauss-Lobatto points. Both are computed by Newton iteration on the Legendre
recurrence, so any order works without tables.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

_NEWTON_TOL = 1e-15
_NEWTON_MAXIT = 100


def _legendre(n, x):
    """Return P_n(x), P_{n-1}(x) and P_n'(x) by the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    p0 = np.ones_like(x)
    if n == 0:
        return p0, np.zeros_like(x), np.zeros_like(x)
    p1 = x.copy()
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    # derivative from (1 - x^2) P_n' = n (P_{n-1} - x P_n), valid off the endpoints
    with np.errstate(divide="ignore", invalid="ignore"):
        dp = n * (p0 - x * p1) / (1.0 - x * x)
    return p1, p0, dp


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.points)

    def integrate(self, f):
        """Integrate a callable over [-1, 1]."""
        return float(np.dot(self.weights, f(self.points)))


@lru_cache(maxsize=None)
def _gauss_legendre_cached(n):
    # Chebyshev-like initial guess, then Newton on P_n
    k = np.arange(1, n + 1)
    x = -np.cos(np.pi * (k - 0.25) / (n + 0.5))
    for _ in range(_NEWTON_MAXIT):
        p, _, dp = _legendre(n, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < _NEWTON_TOL:
            break
    _, _, dp = _legendre(n, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    # enforce exact symmetry
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(n: int) -> QuadratureRule:
    """Return the ``n``-point Gauss-Legendre rule on [-1, 1].

    All abscissae are strictly interior, which keeps integrands carrying
    1/r or 1/r^2 factors finite on the first element.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"quadrature size must be a positive integer, got {n!r}")
    x, w = _gauss_legendre_cached(int(n))
    return QuadratureRule(x, w)


@lru_cache(maxsize=None)
def lobatto_nodes(p: int) -> np.ndarray:
    """The p+1 Gauss-Lobatto points: -1, 1 and the roots of P_p'."""
    if int(p) != p or p < 1:
        raise ValueError(f"element order must be a positive integer, got {p!r}")
    p = int(p)
    if p == 1:
        x = np.array([-1.0, 1.0])
    else:
        # interior nodes are the roots of P_p'; Newton on (x P_p - P_{p-1})
        # starting from Chebyshev-Gauss-Lobatto points
        x = -np.cos(np.pi * np.arange(p + 1) / p)
        xi = x[1:-1].copy()
        for _ in range(_NEWTON_MAXIT):
            pn, pm, _ = _legendre(p, xi)
            f = xi * pn - pm
            # d/dx (x P_p - P_{p-1}) = (p+1) P_p
            dx = f / ((p + 1) * pn)
            xi = xi - dx
            if np.max(np.abs(dx)) < _NEWTON_TOL:
                break
        x = np.concatenate(([-1.0], xi, [1.0]))
        x = 0.5 * (x - x[::-1])
    x.setflags(write=False)
    return x


def lagrange_tables(nodes, t):
    """Values and derivatives of the Lagrange cardinal functions.

    Returns two arrays of shape ``(len(t), len(nodes))``.
    """
    nodes = np.asarray(nodes, dtype=float)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    m = len(nodes)
    vals = np.ones((len(t), m))
    ders = np.zeros((len(t), m))
    # direct product form; exact at the nodes and stable for p <= 20
    for j in range(m):
        others = np.delete(nodes, j)
        denom = np.prod(nodes[j] - others)
        factors = t[:, None] - others[None, :]
        vals[:, j] = np.prod(factors, axis=1) / denom
        acc = np.zeros(len(t))
        for k in range(m - 1):
            acc += np.prod(np.delete(factors, k, axis=1), axis=1)
        ders[:, j] = acc / denom
    return vals, ders


def derivative_table(nodes, t, order):
    """Matrix mapping nodal values to the ``order``-th derivative at ``t``.

    Goes through the Legendre expansion of the interpolant, which is well
    conditioned on Lobatto nodes.
    """
    nodes = np.asarray(nodes, dtype=float)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if int(order) != order or order < 0:
        raise ValueError(f"derivative order must be a non-negative integer, got {order!r}")
    deg = len(nodes) - 1
    to_modal = np.linalg.inv(np.polynomial.legendre.legvander(nodes, deg))
    modal_der = np.polynomial.legendre.legder(to_modal, int(order)) if order else to_modal
    if modal_der.shape[0] == 0 or order > deg:
        return np.zeros((len(t), len(nodes)))
    return np.polynomial.legendre.legvander(t, modal_der.shape[0] - 1) @ modal_der


@dataclass(frozen=True)
class ElementBasis:
    """Nodal Lagrange basis of order ``p`` on the Gauss-Lobatto points.

    ``shape_values[q, j]`` is phi_j at quadrature point q, ``shape_derivs``
    the derivative with respect to the reference coordinate.
    """

    order: int
    nodes: np.ndarray
    quadrature: QuadratureRule
    shape_values: np.ndarray = field(repr=False)
    shape_derivs: np.ndarray = field(repr=False)

    @property
    def n_nodes(self):
        return self.order + 1

    def evaluate(self, t):
        """Tables of (phi_j(t), phi_j'(t)) at arbitrary reference points."""
        return lagrange_tables(self.nodes, t)


@lru_cache(maxsize=None)
def lobatto_basis(p: int, n_quad: int | None = None) -> ElementBasis:
    """Order-``p`` Lagrange basis on Lobatto nodes with tables on an
    ``n_quad``-point Gauss rule (default ``p + 2``)."""
    nodes = lobatto_nodes(p)
    rule = gauss_legendre(p + 2 if n_quad is None else n_quad)
    vals, ders = lagrange_tables(nodes, rule.points)
    vals.setflags(write=False)
    ders.setflags(write=False)
    return ElementBasis(int(p), nodes, rule, vals, ders)


def _check_point(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < -1.0 - 1e-14) or np.any(t > 1.0 + 1e-14):
        raise ValueError("reference coordinate outside [-1, 1]")
    return t


def eval_fe_function(basis: ElementBasis, coeffs, t):
    """Evaluate sum_j coeffs_j phi_j(t) on the reference element."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[0] != basis.n_nodes:
        raise ValueError(f"expected {basis.n_nodes} coefficients, got {coeffs.shape[0]}")
    t = _check_point(t)
    vals, _ = basis.evaluate(t)
    out = vals @ coeffs
    return float(out[0]) if t.ndim == 0 else out


def eval_fe_derivative(basis: ElementBasis, coeffs, t):
    """d/dt of :func:`eval_fe_function`."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[0] != basis.n_nodes:
        raise ValueError(f"expected {basis.n_nodes} coefficients, got {coeffs.shape[0]}")
    t = _check_point(t)
    _, ders = basis.evaluate(t)
    out = ders @ coeffs
    return float(out[0]) if t.ndim == 0 else out
