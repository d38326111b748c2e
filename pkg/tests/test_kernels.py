"""Both kernel backends against dense numpy oracles."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radialks import kernels
from radialks.assembly import BandedMatrix

from conftest import BACKENDS, random_band

dims = st.tuples(st.integers(1, 40), st.integers(0, 6))


@settings(max_examples=50, deadline=None)
@given(dims=dims, seed=st.integers(0, 2**31 - 1))
def test_band_matvec_matches_dense(dims, seed):
    n, p = dims
    rng = np.random.default_rng(seed)
    a = random_band(rng, n, min(p, n - 1) if n > 1 else 0)
    bm = BandedMatrix.from_dense(a, p=min(p, n - 1) if n > 1 else 0)
    x = rng.standard_normal(n)
    for mod in BACKENDS.values():
        assert np.allclose(mod.band_matvec(bm.ab, bm.p, x), a @ x, atol=1e-12)
        assert np.allclose(mod.band_rmatvec(bm.ab, bm.p, x), a.T @ x, atol=1e-12)


def test_scatter_band_matches_dense_assembly(backend, rng):
    p, n_ele = 3, 5
    local = rng.standard_normal((n_ele, p + 1, p + 1))
    n = n_ele * p + 1
    dense = np.zeros((n, n))
    for e in range(n_ele):
        idx = np.arange(e * p, e * p + p + 1)
        dense[np.ix_(idx, idx)] += local[e]
    ab = backend.scatter_band(np.zeros((2 * p + 1, n)), p, local)
    assert np.allclose(BandedMatrix(ab, p).todense(), dense)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 60), seed=st.integers(0, 2**31 - 1))
def test_thomas_matches_dense_solve(n, seed):
    rng = np.random.default_rng(seed)
    sub, sup = rng.standard_normal(n - 1), rng.standard_normal(n - 1)
    diag = 3.0 + np.abs(rng.standard_normal(n))
    rhs = rng.standard_normal(n)
    a = np.diag(diag) + np.diag(sub, -1) + np.diag(sup, 1)
    expect = np.linalg.solve(a, rhs)
    for mod in BACKENDS.values():
        assert np.allclose(mod.thomas(sub, diag, sup, rhs), expect, atol=1e-10)


def test_thomas_zero_pivot_returns_none(backend):
    assert backend.thomas(np.array([1.0]), np.array([0.0, 1.0]), np.array([1.0]), np.ones(2)) is None


@pytest.mark.parametrize("n,p", [(30, 2), (80, 4)])
def test_bicg_kernel_solves_nonsymmetric_system(backend, rng, n, p):
    a = random_band(rng, n, p)
    bm = BandedMatrix.from_dense(a, p=p)
    b = rng.standard_normal(n)
    x, it, status, res = backend.bicg(bm.ab, bm.p, b, np.zeros(n), 1e-12, 10 * n)
    assert status == kernels.CONVERGED
    assert res < 1e-12
    assert np.allclose(x, np.linalg.solve(a, b), atol=1e-9)


def test_bicg_kernel_zero_rhs(backend):
    ab = np.ones((1, 4))
    x, it, status, res = backend.bicg(ab, 0, np.zeros(4), np.ones(4), 1e-10, 10)
    assert status == kernels.CONVERGED and it == 0 and np.all(x == 0)


def test_backends_agree_bitwise_enough(rng):
    if len(BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    a = random_band(rng, 50, 3)
    bm = BandedMatrix.from_dense(a, p=3)
    b = rng.standard_normal(50)
    out = [m.bicg(bm.ab, 3, b, np.zeros(50), 1e-13, 500)[0] for m in BACKENDS.values()]
    assert np.allclose(out[0], out[1], atol=1e-11)


def test_backend_selection_reports_name():
    assert kernels.BACKEND in ("cython", "python")
    assert "python" in kernels.backends()
