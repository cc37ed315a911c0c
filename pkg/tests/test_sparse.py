import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from bcprecond.assembly import full_stiffness
from bcprecond.mesh import build_mesh
from bcprecond.sparse import (
    NotSPDError,
    coo_to_csr,
    factor_spd,
    read_matrix_market,
    spmv,
    write_matrix_market,
)
from conftest import problem


@given(st.integers(1, 12), st.integers(0, 40), st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_coo_to_csr_sums_duplicates(n, nnz, seed):
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, n, nnz)
    cols = rng.integers(0, n, nnz)
    vals = rng.standard_normal(nnz)
    A = coo_to_csr(rows, cols, vals, (n, n))
    D = np.zeros((n, n))
    np.add.at(D, (rows, cols), vals)
    np.testing.assert_allclose(A.toarray(), D, atol=1e-14)
    assert A.has_sorted_indices
    # same entries in a different order give bit-identical storage
    p = rng.permutation(nnz)
    B = coo_to_csr(rows[p], cols[p], vals[p], (n, n))
    assert np.array_equal(A.data, B.data) and np.array_equal(A.indices, B.indices)


def test_spmv_matches_dense(rng):
    A = sp.random(30, 20, density=0.2, random_state=3, format="csr")
    x = rng.standard_normal(20)
    np.testing.assert_allclose(spmv(A, x), A.toarray() @ x, atol=1e-14)
    with pytest.raises(ValueError):
        spmv(A, np.ones(21))


def test_diagonal_solve():
    d = np.arange(1.0, 6.0)
    F = factor_spd(sp.diags(d), "D")
    np.testing.assert_allclose(F.solve(np.ones(5)), 1 / d, rtol=1e-15)


def test_stiffness_solve_matches_dense(rng):
    K = problem(2, 1, 1e-2).K
    x = rng.standard_normal(K.shape[0])
    F = factor_spd(K, "K")
    np.testing.assert_allclose(F.solve(x), np.linalg.solve(K.toarray(), x), rtol=1e-10, atol=1e-12)
    assert F.perm.shape == (K.shape[0],)
    assert F.nnz > 0


def test_singular_neumann_stiffness_rejected():
    # no Dirichlet part at all: constants are in the kernel
    K = full_stiffness(build_mesh(2))
    with pytest.raises(NotSPDError) as info:
        factor_spd(K, "K")
    assert info.value.name == "K"


def test_indefinite_and_asymmetric_rejected():
    with pytest.raises(NotSPDError):
        factor_spd(sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 1.0]])))
    with pytest.raises(NotSPDError):
        factor_spd(sp.csr_matrix(np.array([[2.0, 1.0], [0.0, 2.0]])))
    with pytest.raises(NotSPDError):
        factor_spd(sp.csr_matrix(np.array([[-1.0, 0.0], [0.0, 1.0]])))


def test_dimension_mismatch():
    F = factor_spd(sp.identity(3, format="csr"))
    with pytest.raises(ValueError):
        F.solve(np.ones(4))


@pytest.mark.parametrize("symmetric", [False, True])
def test_matrix_market_roundtrip(tmp_path, symmetric):
    K = problem(2, 3, 1e-2).K
    path = tmp_path / "K.mtx"
    write_matrix_market(path, K, symmetric=symmetric)
    back = read_matrix_market(path)
    assert (back != K).nnz == 0
    first = path.read_bytes()
    write_matrix_market(path, K, symmetric=symmetric)
    assert path.read_bytes() == first
