import functools

import numpy as np
import pytest

from bcprecond.assembly import assemble_problem


@functools.lru_cache(maxsize=None)
def problem(level, gamma, beta, test_problem=1, lumped=False):
    return assemble_problem(level, gamma, beta, problem=test_problem, lumped=lumped)


def dense_kkt(data):
    """Original-layout KKT matrix and rhs built from dense blocks."""
    M, K = data.M.toarray(), data.K.toarray()
    Mg, N = data.M_Gamma.toarray(), data.N_Gamma.toarray()
    n, m = data.n, data.m_B
    A = np.zeros((2 * n + m, 2 * n + m))
    A[:n, :n] = M
    A[:n, n + m:] = K
    A[n:n + m, n:n + m] = data.beta * Mg
    A[n:n + m, n + m:] = -N.T
    A[n + m:, :n] = K
    A[n + m:, n:n + m] = -N
    rhs = np.concatenate([data.b, np.zeros(m), data.f])
    return A, rhs


@pytest.fixture
def small():
    return problem(3, 2, 1e-2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def record(criterion, ok, detail=""):
    ACCEPTANCE[criterion] = (bool(ok), detail)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.split("-")[0]), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
