import numpy as np
import pytest

from radialks.assembly import BandedMatrix, assemble_centrifugal, assemble_eigensystem, assemble_laplacian
from radialks.eigensolve import (
    Preconditioner,
    apply_preconditioner,
    bicg,
    dense_eig_oracle,
    lobpcg,
    write_iteration_trace,
)
from radialks.errors import ConvergenceError
from radialks.mesh import uniform_mesh

from conftest import random_band


def hydrogenic_pencil(Z=1.0, l=0, R=40.0, n_ele=20, p=4):
    mesh = uniform_mesh(R, n_ele, p)
    h, m = assemble_eigensystem(mesh, -Z / mesh.quad_points, l)
    return mesh, h, m


def test_bicg_wrapper_converges_and_validates(rng):
    a = random_band(rng, 40, 3)
    bm = BandedMatrix.from_dense(a, p=3)
    b = rng.standard_normal(40)
    x, info = bicg(bm, b, tol=1e-12)
    assert info == 0 and np.allclose(a @ x, b, atol=1e-9)
    with pytest.raises(ValueError):
        bicg(bm, np.ones(3))


def test_bicg_wrapper_reports_maxit(rng):
    a = random_band(rng, 40, 3)
    bm = BandedMatrix.from_dense(a, p=3)
    b = rng.standard_normal(40)
    x, info = bicg(bm, b, tol=1e-14, maxit=2)
    assert info > 0
    with pytest.raises(ConvergenceError) as err:
        bicg(bm, b, tol=1e-14, maxit=2, raise_on_failure=True)
    assert err.value.partial is not None


@pytest.mark.parametrize("method", ["direct", "bicg"])
def test_preconditioner_inverts_shifted_operator(method):
    mesh, h, m = hydrogenic_pencil(n_ele=6, p=3)
    lap = assemble_laplacian(mesh)
    pc = Preconditioner(lap, m, method=method, rtol=1e-12, maxit=500)
    r = np.linspace(1.0, 2.0, m.n)
    y = apply_preconditioner(pc, r, -0.5)
    t = 0.5 * lap.todense() + 0.5 * m.todense()
    assert np.allclose(t @ y, r, rtol=1e-8, atol=1e-8)


def test_preconditioner_clamps_positive_shift():
    mesh, h, m = hydrogenic_pencil(n_ele=6, p=3)
    lap = assemble_laplacian(mesh)
    pc = Preconditioner(lap, m)
    r = np.ones(m.n)
    # a positive shift would make T indefinite; it is clamped to -0.1
    assert np.allclose(apply_preconditioner(pc, r, 5.0), apply_preconditioner(pc, r, -0.1))


def test_preconditioner_includes_centrifugal_term():
    mesh, h, m = hydrogenic_pencil(n_ele=6, p=3)
    lap = assemble_laplacian(mesh)
    cen = assemble_centrifugal(mesh, 2)
    pc = Preconditioner(lap, m, centrifugal=cen)
    r = np.linspace(1.0, 2.0, m.n)
    y = apply_preconditioner(pc, r, -0.5)
    t = 0.5 * lap.todense() + cen.todense() + 0.5 * m.todense()
    assert np.allclose(t @ y, r, rtol=1e-8, atol=1e-8)


def test_preconditioner_identity_and_bad_method():
    r = np.arange(4.0)
    assert np.array_equal(apply_preconditioner(Preconditioner.identity(), r, -1.0), r)
    with pytest.raises(ValueError):
        Preconditioner(None, None, method="jacobi")


@pytest.mark.parametrize("l", [0, 1, 2])
def test_lobpcg_matches_dense_oracle(l):
    mesh, h, m = hydrogenic_pencil(l=l)
    k = 3
    pc = Preconditioner(assemble_laplacian(mesh), m)
    sol = lobpcg(h, m, k, precond=pc, tol=1e-9)
    ref, _ = dense_eig_oracle(h, m)
    assert sol.converged
    assert np.allclose(sol.eigenvalues, ref[:k], atol=1e-10)
    # M-orthonormal eigenvectors
    x = sol.eigenvectors
    assert np.allclose(x.T @ m.matvec(x), np.eye(k), atol=1e-10)
    assert np.all(sol.residual_norms < 1e-9 * 10)


def test_lobpcg_hydrogen_levels():
    mesh, h, m = hydrogenic_pencil(R=60.0, n_ele=30, p=6)
    pc = Preconditioner(assemble_laplacian(mesh), m)
    sol = lobpcg(h, m, 3, precond=pc, tol=1e-10)
    assert np.allclose(sol.eigenvalues, [-0.5, -0.125, -1 / 18], atol=1e-9)


def test_lobpcg_deterministic_for_seed():
    mesh, h, m = hydrogenic_pencil()
    a = lobpcg(h, m, 2, seed=7, precond=Preconditioner(assemble_laplacian(mesh), m))
    b = lobpcg(h, m, 2, seed=7, precond=Preconditioner(assemble_laplacian(mesh), m))
    assert np.array_equal(a.eigenvalues, b.eigenvalues)
    assert a.iterations == b.iterations


def test_lobpcg_warm_start_is_fast():
    mesh, h, m = hydrogenic_pencil()
    pc = Preconditioner(assemble_laplacian(mesh), m)
    cold = lobpcg(h, m, 2, precond=pc, tol=1e-9)
    warm = lobpcg(h, m, 2, X0=cold.eigenvectors, precond=pc, tol=1e-9)
    assert warm.iterations <= 1


def test_lobpcg_failure_carries_partial():
    mesh, h, m = hydrogenic_pencil()
    with pytest.raises(ConvergenceError) as err:
        lobpcg(h, m, 2, tol=1e-12, maxit=2)
    assert err.value.partial is not None
    sol = lobpcg(h, m, 2, tol=1e-12, maxit=2, raise_on_failure=False)
    assert not sol.converged


def test_lobpcg_rejects_too_many_eigenpairs():
    _, h, m = hydrogenic_pencil(n_ele=2, p=1)
    with pytest.raises(ValueError):
        lobpcg(h, m, 5)


def test_iteration_trace_csv(tmp_path):
    mesh, h, m = hydrogenic_pencil()
    sol = lobpcg(h, m, 2, precond=Preconditioner(assemble_laplacian(mesh), m))
    path = tmp_path / "trace.csv"
    write_iteration_trace(path, [sol], [["1s", "2s"]])
    lines = path.read_text().splitlines()
    assert lines[0] == "orbital,iteration,residual"
    assert lines[1].startswith("1s,0,")
    assert len(lines) == 1 + 2 * len(sol.residual_history)
