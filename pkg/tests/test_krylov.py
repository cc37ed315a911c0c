import numpy as np
import pytest

from bcprecond.krylov import (
    IndefinitePreconditioner,
    NoConvergence,
    SolverConfig,
    gmres,
    minres,
    solve_kkt,
)
from conftest import dense_kkt, problem


def _spd(n, rng):
    Q = rng.standard_normal((n, n))
    return Q @ Q.T + n * np.eye(n)


def _sym_indefinite(n, rng):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    ev = np.concatenate([np.linspace(1, 5, n - n // 3), -np.linspace(1, 3, n // 3)])
    return Q @ np.diag(ev) @ Q.T


@pytest.mark.parametrize("solver", [gmres, minres])
def test_exact_inverse_one_iteration(solver, rng):
    A = _sym_indefinite(20, rng) if solver is gmres else _spd(20, rng)
    b = rng.standard_normal(20)
    Ainv = np.linalg.inv(A)
    x, report = solver(lambda v: A @ v, b, (lambda v: Ainv @ v) if solver is gmres else None, tol=1e-10)
    if solver is gmres:
        assert report.iterations == 1
    np.testing.assert_allclose(x, np.linalg.solve(A, b), rtol=1e-8)


@pytest.mark.parametrize("solver", [gmres, minres])
def test_unpreconditioned_matches_dense(solver, rng):
    A = _sym_indefinite(40, rng)
    b = rng.standard_normal(40)
    x, report = solver(lambda v: A @ v, b, tol=1e-10, max_iter=200)
    assert report.converged
    assert report.residual_history[-1] <= 1e-10
    assert np.linalg.norm(b - A @ x) / np.linalg.norm(b) <= 1e-10
    assert len(report.residual_history) == report.iterations + 1


def test_minres_spd_preconditioner(rng):
    A = _sym_indefinite(50, rng)
    D = np.diag(np.abs(np.diag(A)) + 1.0)
    b = rng.standard_normal(50)
    x, report = minres(lambda v: A @ v, b, lambda v: v / np.diag(D), tol=1e-9, max_iter=200)
    np.testing.assert_allclose(x, np.linalg.solve(A, b), rtol=1e-6, atol=1e-8)
    assert report.preconditioned_history[0] == 1.0


@pytest.mark.parametrize("solver", [gmres, minres])
def test_zero_rhs(solver):
    x, report = solver(lambda v: v, np.zeros(5))
    assert report.converged and report.iterations == 0
    assert np.all(x == 0)


def test_gmres_residual_monotone(rng):
    A = rng.standard_normal((60, 60)) + 8 * np.eye(60)
    b = rng.standard_normal(60)
    _, report = gmres(lambda v: A @ v, b, tol=1e-10, max_iter=60)
    h = np.array(report.residual_history)
    assert np.all(np.diff(h) <= 1e-12)


def test_no_convergence_carries_report(rng):
    A = _sym_indefinite(40, rng)
    b = rng.standard_normal(40)
    with pytest.raises(NoConvergence) as info:
        gmres(lambda v: A @ v, b, tol=1e-12, max_iter=3)
    assert info.value.report.iterations == 3
    assert not info.value.report.converged
    assert info.value.x.shape == b.shape


def test_indefinite_preconditioner_detected(rng):
    A = _spd(10, rng)
    with pytest.raises(IndefinitePreconditioner):
        minres(lambda v: A @ v, np.ones(10), lambda v: -v)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig("cg")
    with pytest.raises(ValueError):
        SolverConfig("gmres", tol=0)
    with pytest.raises(ValueError):
        SolverConfig("minres", max_iter=0)


@pytest.mark.parametrize("method", ["gmres-pt", "minres-pd1", "minres-pd2"])
def test_solve_kkt_matches_dense(method):
    data = problem(3, 3, 1e-4)
    A, rhs = dense_kkt(data)
    x = np.linalg.solve(A, rhs)
    sol, report = solve_kkt(data, method, tol=1e-10)
    assert report.converged and report.method == method
    assert np.linalg.norm(sol.vector - x) / np.linalg.norm(x) < 1e-7
    assert report.kkt_residual <= 2e-10
    assert sum(report.solve_counts.values()) > 0


def test_gmres_and_minres_agree():
    data = problem(4, 2, 1e-2)
    a, _ = solve_kkt(data, "gmres-pt", tol=1e-8)
    b, _ = solve_kkt(data, "minres-pd1", tol=1e-8)
    assert np.linalg.norm(a.vector - b.vector) / np.linalg.norm(a.vector) < 1e-6


def test_solve_counts_contract():
    data = problem(3, 1, 1e-2)
    _, report = solve_kkt(data, "gmres-pt", tol=1e-8)
    k = report.iterations
    # one application per Arnoldi step plus one to form the final iterate
    assert report.solve_counts == {"K": 2 * (k + 1), "M_Gamma": k + 1}


def test_unknown_method():
    with pytest.raises(ValueError):
        solve_kkt(problem(2, 1, 1e-2), "cg-pt")
