import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radialks.quadrature import (
    derivative_table,
    eval_fe_derivative,
    eval_fe_function,
    gauss_legendre,
    lagrange_tables,
    lobatto_basis,
    lobatto_nodes,
)


@pytest.mark.parametrize("n", [1, 2, 5, 12, 20])
def test_gauss_legendre_matches_numpy(n):
    x, w = np.polynomial.legendre.leggauss(n)
    rule = gauss_legendre(n)
    assert np.allclose(rule.points, x, atol=1e-14)
    assert np.allclose(rule.weights, w, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 15), data=st.data())
def test_gauss_legendre_exact_to_degree_2n_minus_1(n, data):
    deg = data.draw(st.integers(0, 2 * n - 1))
    coef = data.draw(st.lists(st.floats(-3, 3), min_size=deg + 1, max_size=deg + 1))
    poly = np.polynomial.Polynomial(coef)
    exact = poly.integ()(1.0) - poly.integ()(-1.0)
    assert gauss_legendre(n).integrate(poly) == pytest.approx(exact, abs=1e-12)


def test_gauss_legendre_rejects_bad_order():
    with pytest.raises(ValueError):
        gauss_legendre(0)


@pytest.mark.parametrize("p", [1, 2, 3, 6, 10])
def test_lobatto_nodes(p):
    t = lobatto_nodes(p)
    assert len(t) == p + 1
    assert t[0] == -1.0 and t[-1] == 1.0
    assert np.allclose(t, -t[::-1], atol=1e-15)
    if p > 1:
        # interior nodes are the roots of P_p'
        dp = np.polynomial.legendre.Legendre.basis(p).deriv()
        assert np.allclose(dp(t[1:-1]), 0.0, atol=1e-11)


@pytest.mark.parametrize("p", [1, 4, 10])
def test_lagrange_cardinal_and_partition_of_unity(p):
    t = lobatto_nodes(p)
    vals, ders = lagrange_tables(t, t)
    assert np.allclose(vals, np.eye(p + 1), atol=1e-12)
    s = np.linspace(-1, 1, 17)
    v, d = lagrange_tables(t, s)
    assert np.allclose(v.sum(axis=1), 1.0)
    assert np.allclose(d.sum(axis=1), 0.0, atol=1e-10)


@pytest.mark.parametrize("p", [2, 5, 10])
@pytest.mark.parametrize("order", [0, 1, 2, 3])
def test_derivative_table_exact_on_polynomials(p, order):
    t = lobatto_nodes(p)
    poly = np.polynomial.Polynomial(np.arange(1.0, p + 2.0) / (p + 1))
    s = np.linspace(-0.9, 0.9, 7)
    got = derivative_table(t, s, order) @ poly(t)
    assert np.allclose(got, poly.deriv(order)(s), rtol=1e-9, atol=1e-9)


def test_derivative_table_beyond_degree_is_zero():
    t = lobatto_nodes(3)
    assert np.all(derivative_table(t, np.array([0.1]), 4) == 0.0)
    with pytest.raises(ValueError):
        derivative_table(t, np.array([0.1]), -1)


def test_fe_evaluation_on_reference_element():
    basis = lobatto_basis(4)
    c = basis.nodes**3
    assert eval_fe_function(basis, c, 0.3) == pytest.approx(0.027)
    assert eval_fe_derivative(basis, c, 0.3) == pytest.approx(3 * 0.09)
    with pytest.raises(ValueError):
        eval_fe_function(basis, c, 1.5)


def test_basis_default_quadrature_is_p_plus_2():
    assert len(lobatto_basis(10).quadrature) == 12
    assert len(lobatto_basis(3, n_quad=9).quadrature) == 9
