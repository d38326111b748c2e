import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radialks.assembly import (
    BandedMatrix,
    assemble_centrifugal,
    assemble_eigensystem,
    assemble_hartree,
    assemble_laplacian,
    assemble_mass,
    quadrature_integral,
)
from radialks.mesh import RadialMesh, uniform_mesh

from conftest import random_band


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 30), p=st.integers(0, 5), seed=st.integers(0, 10**6))
def test_band_storage_round_trip(n, p, seed):
    p = min(p, n - 1)
    a = random_band(np.random.default_rng(seed), n, p)
    bm = BandedMatrix.from_dense(a, p=p)
    assert np.array_equal(bm.todense(), a)
    for j in (0, n - 1, n // 2):
        assert np.array_equal(bm.column(j), a[:, j])


def test_submatrix_drops_couplings():
    a = random_band(np.random.default_rng(0), 12, 3)
    sub = BandedMatrix.from_dense(a, p=3).submatrix(1, 11)
    assert np.array_equal(sub.todense(), a[1:11, 1:11])


def test_band_storage_validates_shape():
    with pytest.raises(ValueError):
        BandedMatrix(np.zeros((4, 5)), 2)


def graded_mesh(p):
    return RadialMesh(np.array([0.0, 0.1, 0.4, 1.0, 2.5, 5.0]), p)


@pytest.mark.parametrize("p", [1, 3, 6])
def test_mass_matrix_integrates_products(p):
    mesh = graded_mesh(p)
    m = assemble_mass(mesh, apply_bc=False)
    f, g = mesh.nodes**p / 10.0, np.ones(mesh.n_dofs)
    # f g is a degree-p polynomial, integrated exactly
    exact = 5.0 ** (p + 1) / (p + 1) / 10.0
    assert f @ m.matvec(g) == pytest.approx(exact, rel=1e-12)
    assert np.allclose(m.todense(), m.todense().T)


@pytest.mark.parametrize("p", [1, 2, 5])
def test_laplacian_energy_of_polynomial(p):
    mesh = graded_mesh(p)
    L = assemble_laplacian(mesh, apply_bc=False)
    f = mesh.nodes**p
    exact = p * p * 5.0 ** (2 * p - 1) / (2 * p - 1)
    assert f @ L.matvec(f) == pytest.approx(exact, rel=1e-11)
    assert np.allclose(L.matvec(np.ones(mesh.n_dofs)), 0.0, atol=1e-12)


def test_eigensystem_symmetric_and_reduced():
    mesh = uniform_mesh(10.0, 4, 3)
    v = -1.0 / mesh.quad_points
    h, m = assemble_eigensystem(mesh, v, l=1)
    assert h.n == mesh.n_dofs - 2 == m.n
    hd = h.todense()
    assert np.allclose(hd, hd.T, atol=1e-14)
    assert np.all(np.linalg.eigvalsh(m.todense()) > 0)


def test_eigensystem_accepts_nodal_potential_and_rejects_bad_l():
    mesh = uniform_mesh(5.0, 3, 2)
    h1, _ = assemble_eigensystem(mesh, np.zeros(mesh.n_dofs), 0)
    h2, _ = assemble_eigensystem(mesh, np.zeros(mesh.quad_points.shape), 0)
    assert np.allclose(h1.ab, h2.ab)
    with pytest.raises(ValueError):
        assemble_eigensystem(mesh, np.zeros(3), 0)
    with pytest.raises(ValueError):
        assemble_eigensystem(mesh, np.zeros(mesh.n_dofs), -1)


def test_quadrature_integral_weights():
    mesh = uniform_mesh(2.0, 3, 4)
    one = np.ones(mesh.quad_points.shape)
    assert quadrature_integral(mesh, one) == pytest.approx(2.0)
    assert quadrature_integral(mesh, one, "r") == pytest.approx(2.0)
    assert quadrature_integral(mesh, one, "r2") == pytest.approx(8.0 / 3.0)
    with pytest.raises(ValueError):
        quadrature_integral(mesh, one, "r3")


def test_hartree_system_of_uniform_ball_charge():
    # rho = 3/(4 pi) inside r < 1 is not polynomial across r = 1, so put a
    # boundary there; V = (3 - r^2)/2 inside, 1/r outside
    mesh = RadialMesh(np.array([0.0, 0.5, 1.0, 2.0, 4.0]), 6)
    rho = np.where(mesh.quad_points < 1.0, 3.0 / (4.0 * np.pi), 0.0)
    sys_ = assemble_hartree(mesh, rho)
    assert sys_.boundary_value == pytest.approx(0.25)
    import scipy.linalg

    a = sys_.matrix
    v = sys_.expand(scipy.linalg.solve_banded((a.p, a.p), a.ab, sys_.rhs))
    r = mesh.nodes
    exact = np.where(r < 1.0, (3.0 - r * r) / 2.0, 1.0 / np.maximum(r, 1e-300))
    assert np.max(np.abs(v - exact)) < 1e-5


def test_hartree_rejects_negative_density():
    mesh = uniform_mesh(1.0, 2, 2)
    with pytest.raises(ValueError):
        assemble_hartree(mesh, -np.ones(mesh.quad_points.shape))


def test_centrifugal_matrix_is_weighted_mass():
    mesh = graded_mesh(4)
    c = assemble_centrifugal(mesh, 2, apply_bc=False)
    # f = r^2 cancels the 1/r^2 weight: f^T C 1 = 3 int_0^5 1 dr
    f, g = mesh.nodes**2, np.ones(mesh.n_dofs)
    assert f @ c.matvec(g) == pytest.approx(15.0, rel=1e-12)
    assert np.allclose(c.todense(), c.todense().T)
    assert assemble_centrifugal(mesh, 0, apply_bc=False).todense().max() == 0.0
    assert assemble_centrifugal(mesh, 1).n == mesh.n_dofs - 2
    with pytest.raises(ValueError):
        assemble_centrifugal(mesh, -1)
    with pytest.raises(ValueError):
        assemble_centrifugal(mesh, 1.5)
