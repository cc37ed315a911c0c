import numpy as np
import pytest

from bcprecond.preconditioners import (
    BlockFactors,
    BlockTriangular,
    DiagPearson,
    DiagRees,
    boundary_gram,
    make_preconditioner,
    matching_stiffness,
)
from bcprecond.saddle import Layout, SaddleOperator
from conftest import problem


def _blocks(data):
    return (data.M.toarray(), data.K.toarray(), data.M_Gamma.toarray(), data.N_Gamma.toarray())


def _dense_pt(data):
    M, K, Mg, N = _blocks(data)
    n, m = data.n, data.m_B
    P = np.zeros((2 * n + m,) * 2)
    P[:n, :n] = K
    P[:n, n:n + m] = -N
    P[n:n + m, n:n + m] = data.beta * Mg
    P[n:n + m, n + m:] = -N.T
    P[n + m:, n + m:] = K
    return P


def _dense_diag(data, X):
    M, K, Mg, N = _blocks(data)
    n, m = data.n, data.m_B
    P = np.zeros((2 * n + m,) * 2)
    P[:n, :n] = M
    P[n:n + m, n:n + m] = data.beta * Mg
    P[n + m:, n + m:] = X @ np.linalg.solve(M, X)
    return P


@pytest.mark.parametrize("gamma", [1, 2, 3])
def test_block_triangular_inverse(gamma, rng):
    data = problem(3, gamma, 1e-4)
    P = BlockTriangular(data)
    np.testing.assert_allclose(P.to_sparse().toarray(), _dense_pt(data), atol=1e-15)
    d = rng.standard_normal(P.shape[0])
    z = P(d)
    np.testing.assert_allclose(_dense_pt(data) @ z, d, atol=1e-10 * np.abs(d).max())
    assert P.per_application() == {"K": 2.0, "M_Gamma": 1.0}


def test_split_apply_matches_operator(rng):
    data = problem(3, 2, 1e-2)
    A = SaddleOperator(data, Layout.PERMUTED)
    P = BlockTriangular(data)
    v = rng.standard_normal(P.shape[0])
    z, w = P.split_apply(v)
    np.testing.assert_allclose(z, P(v), rtol=1e-15)
    np.testing.assert_allclose(w, A(z), atol=1e-10 * np.abs(w).max())


def test_split_apply_avoids_cancellation(rng):
    # at tiny beta the split form still equals v + (A - P) P^-1 v
    data = problem(4, 3, 1e-10)
    A = SaddleOperator(data, Layout.PERMUTED).to_sparse().toarray()
    P = BlockTriangular(data)
    v = rng.standard_normal(P.shape[0])
    _, w = P.split_apply(v)
    exact = v.copy()
    exact[data.n + data.m_B:] += np.linalg.solve(P.to_sparse().toarray(), v)[: data.n] @ data.M.toarray()
    assert np.linalg.norm(w - exact) <= 1e-8 * np.linalg.norm(exact)


def test_diag_rees_inverse(rng):
    data = problem(3, 3, 1e-2)
    P = DiagRees(data)
    d = rng.standard_normal(P.shape[0])
    _, K, _, _ = _blocks(data)
    np.testing.assert_allclose(_dense_diag(data, K) @ P(d), d, rtol=1e-9, atol=1e-9)
    assert P.per_application() == {"K": 2.0, "M": 1.0, "M_Gamma": 1.0}


def test_diag_pearson_inverse(rng):
    data = problem(3, 2, 1e-6)
    P = DiagPearson(data)
    d = rng.standard_normal(P.shape[0])
    M, K, Mg, N = _blocks(data)
    Khat = K + np.sqrt(data.h / data.beta) * N @ np.linalg.solve(Mg, N.T)
    np.testing.assert_allclose(matching_stiffness(data).toarray(), Khat, rtol=1e-12, atol=1e-12)
    got = _dense_diag(data, Khat) @ P(d)
    np.testing.assert_allclose(got, d, rtol=1e-8, atol=1e-8 * np.abs(d).max())
    assert P.per_application() == {"K_hat": 2.0, "M": 1.0, "M_Gamma": 1.0}


@pytest.mark.parametrize("lumped", [False, True])
def test_boundary_gram(lumped):
    data = problem(3, 3, 1e-2, lumped=lumped)
    _, _, Mg, N = _blocks(data)
    np.testing.assert_allclose(boundary_gram(data).toarray(), N @ np.linalg.solve(Mg, N.T), atol=1e-14)


def test_diagonal_preconditioners_spd():
    data = problem(2, 2, 1e-4)
    for kind in ("pd1", "pd2"):
        P = make_preconditioner(kind, data)
        Z = np.column_stack([P(e) for e in np.eye(P.shape[0])])
        np.testing.assert_allclose(Z, Z.T, atol=1e-8 * np.abs(Z).max())
        assert np.linalg.eigvalsh(0.5 * (Z + Z.T)).min() > 0


@pytest.mark.parametrize("gamma", [1, 3])
def test_low_rank_perturbation(gamma):
    # A - P_T only has the M block in its first block column, and the leading
    # n x n block of P_T^-1 A - I has rank at most m_B
    data = problem(3, gamma, 1e-2)
    n = data.n
    A = SaddleOperator(data, Layout.PERMUTED).to_sparse().toarray()
    P = _dense_pt(data)
    E = np.linalg.solve(P, A) - np.eye(A.shape[0])
    assert np.abs(E[:, n:]).max() < 1e-12
    s = np.linalg.svd(E[:n, :n], compute_uv=False)
    assert np.sum(s > 1e-9 * s[0]) <= data.m_B


def test_factors_shared_and_checked():
    data = problem(3, 1, 1e-2)
    F = BlockFactors(data)
    P1 = BlockTriangular(data, F)
    P2 = make_preconditioner("pd2", data.with_beta(1e-4), F)
    assert P1.factors.K is P2.factors.K
    assert F.K_hat(1e-4) is F.K_hat(1e-4)
    with pytest.raises(ValueError):
        BlockTriangular(problem(3, 2, 1e-2), F)
    with pytest.raises(ValueError):
        make_preconditioner("xx", data)
