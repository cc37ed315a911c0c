"""Preconditioned GMRES and MINRES with a true-residual stopping rule.

Both solvers start from the zero vector and stop as soon as the relative
residual ``||b - A x_k|| / ||b||`` in the Euclidean norm drops to ``tol``.
"""

import csv
import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .preconditioners import BlockFactors, make_preconditioner
from .saddle import KktSolution, Layout, build_system, kkt_residual

__all__ = [
    "SolverConfig",
    "SolveReport",
    "NoConvergence",
    "IndefinitePreconditioner",
    "gmres",
    "minres",
    "solve_kkt",
    "METHODS",
]


@dataclass(frozen=True)
class SolverConfig:
    method: str = "gmres"
    tol: float = 1e-6
    max_iter: int = 2000

    def __post_init__(self):
        if self.method not in ("gmres", "minres"):
            raise ValueError(f"unknown Krylov method {self.method!r}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")


@dataclass
class SolveReport:
    method: str
    iterations: int = 0
    converged: bool = False
    residual_history: list = field(default_factory=list)
    preconditioned_history: list = field(default_factory=list)
    wall_time: float = 0.0
    solve_counts: dict = field(default_factory=dict)
    kkt_residual: float = float("nan")
    breakdown: bool = False

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "true_residual", "preconditioned_residual"])
            for k, r in enumerate(self.residual_history):
                pr = self.preconditioned_history[k] if k < len(self.preconditioned_history) else ""
                w.writerow([k, repr(float(r)), repr(float(pr)) if pr != "" else ""])


class NoConvergence(RuntimeError):
    def __init__(self, report, x=None):
        self.report = report
        self.x = x
        super().__init__(
            f"{report.method} did not reach the tolerance in {report.iterations} iterations "
            f"(last relative residual {report.residual_history[-1]:.3e})"
        )


class IndefinitePreconditioner(RuntimeError):
    pass


def _identity(v):
    return v


def gmres(A, b, M=None, tol=1e-6, max_iter=2000, AM=None):
    """Full right-preconditioned GMRES with modified Gram-Schmidt.

    ``A`` and ``M`` are callables; ``M`` applies the inverse preconditioner.
    ``AM``, if given, maps ``v`` to ``(M v, A M v)`` and replaces the two
    separate calls; preconditioners that can evaluate ``A M v`` without
    cancellation use it to keep the Arnoldi relation accurate.

    ``residual_history`` holds the Arnoldi residual norms, which equal
    ``||b - A x_k|| / ||b||`` in exact arithmetic.  Once that estimate
    reaches ``tol`` the iterate ``x_k = M (V_k y_k)`` is formed and its true
    residual recomputed; it replaces the estimate in the history and the
    solve stops only if it is at most ``tol``.  Each check costs one extra
    preconditioner application.
    """
    M = _identity if M is None else M
    if AM is None:
        def AM(v):
            z = M(v)
            return z, A(z)
    b = np.asarray(b, dtype=float)
    report = SolveReport("gmres")
    t0 = time.perf_counter()
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b)
    report.residual_history.append(1.0 if bnorm > 0 else 0.0)
    report.preconditioned_history.append(1.0 if bnorm > 0 else 0.0)
    if bnorm == 0:
        report.converged = True
        report.wall_time = time.perf_counter() - t0
        return x, report

    # the Krylov space cannot grow beyond the dimension
    m = min(int(max_iter), b.size)
    V = [b / bnorm]
    H = np.zeros((m + 1, m))
    cs = np.zeros(m)
    sn = np.zeros(m)
    g = np.zeros(m + 1)
    g[0] = bnorm
    y = np.zeros(0)

    def iterate(k):
        return M(np.column_stack(V[:k]) @ y)

    for j in range(m):
        _, w = AM(V[j])
        for i in range(j + 1):
            H[i, j] = np.dot(w, V[i])
            w -= H[i, j] * V[i]
        H[j + 1, j] = np.linalg.norm(w)

        for i in range(j):
            hi, hi1 = H[i, j], H[i + 1, j]
            H[i, j] = cs[i] * hi + sn[i] * hi1
            H[i + 1, j] = -sn[i] * hi + cs[i] * hi1
        hjj, hj1 = H[j, j], H[j + 1, j]
        denom = np.hypot(hjj, hj1)
        if denom == 0:
            break
        cs[j], sn[j] = hjj / denom, hj1 / denom
        H[j, j] = denom
        breakdown = hj1 <= 1e-14 * denom
        H[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]

        k = j + 1
        y = np.linalg.solve(np.triu(H[:k, :k]), g[:k])
        estimate = abs(g[k]) / bnorm
        report.residual_history.append(estimate)
        report.preconditioned_history.append(estimate)
        report.iterations = k
        if estimate <= tol or breakdown:
            x = iterate(k)
            rel = float(np.linalg.norm(b - A(x)) / bnorm)
            report.residual_history[-1] = rel
            if rel <= tol:
                report.converged = True
                break
            if breakdown:
                report.breakdown = True
                break
        V.append(w / hj1)

    if not report.converged and y.size:
        x = iterate(y.size)
    report.wall_time = time.perf_counter() - t0
    if not report.converged:
        raise NoConvergence(report, x)
    return x, report


def minres(A, b, M=None, tol=1e-6, max_iter=2000):
    """Preconditioned MINRES for symmetric ``A`` with an SPD preconditioner.

    ``M`` applies the inverse preconditioner.  The recurrence minimizes the
    residual in the M^-1 norm; that estimate is logged alongside the true
    relative residual, which decides convergence.
    """
    M = _identity if M is None else M
    b = np.asarray(b, dtype=float)
    report = SolveReport("minres")
    t0 = time.perf_counter()
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b)
    report.residual_history.append(1.0 if bnorm > 0 else 0.0)
    report.preconditioned_history.append(1.0 if bnorm > 0 else 0.0)
    if bnorm == 0:
        report.converged = True
        report.wall_time = time.perf_counter() - t0
        return x, report

    v_old = np.zeros_like(b)
    v = b.copy()
    z = M(v)
    gamma2 = np.dot(z, v)
    if gamma2 <= 0:
        raise IndefinitePreconditioner(f"<M^-1 r, r> = {gamma2:.3e} <= 0 at the initial residual")
    gamma_old, gamma = 1.0, np.sqrt(gamma2)
    eta = eta0 = gamma
    s_old = s = 0.0
    c_old = c = 1.0
    w_old = np.zeros_like(b)
    w = np.zeros_like(b)

    for j in range(1, max_iter + 1):
        z = z / gamma
        Az = A(z)
        delta = np.dot(Az, z)
        v_new = Az - (delta / gamma) * v - (gamma / gamma_old) * v_old
        z_new = M(v_new)
        gamma2 = np.dot(z_new, v_new)
        if gamma2 < 0:
            raise IndefinitePreconditioner(f"<M^-1 v, v> = {gamma2:.3e} < 0 at iteration {j}")
        gamma_new = np.sqrt(gamma2)

        alpha0 = c * delta - c_old * s * gamma
        alpha1 = np.hypot(alpha0, gamma_new)
        alpha2 = s * delta + c_old * c * gamma
        alpha3 = s_old * gamma
        c_old, s_old = c, s
        c, s = alpha0 / alpha1, gamma_new / alpha1
        w_new = (z - alpha3 * w_old - alpha2 * w) / alpha1
        x = x + c * eta * w_new
        eta = -s * eta
        w_old, w = w, w_new

        rel = float(np.linalg.norm(b - A(x)) / bnorm)
        report.residual_history.append(rel)
        report.preconditioned_history.append(abs(eta) / eta0)
        report.iterations = j
        if rel <= tol:
            report.converged = True
            break
        if gamma_new == 0.0:
            # invariant subspace found; x is exact up to rounding
            report.breakdown = True
            report.converged = bool(rel <= tol)
            break
        v_old, v = v, v_new
        z = z_new
        gamma_old, gamma = gamma, gamma_new

    report.wall_time = time.perf_counter() - t0
    if not report.converged:
        raise NoConvergence(report, x)
    return x, report


# CLI method name -> (Krylov method, preconditioner kind, layout)
METHODS = {
    "gmres-pt": ("gmres", "pt", Layout.PERMUTED),
    "minres-pd1": ("minres", "pd1", Layout.ORIGINAL),
    "minres-pd2": ("minres", "pd2", Layout.ORIGINAL),
}


def solve_kkt(data, method="gmres-pt", tol=1e-6, max_iter=2000, factors=None):
    """Solve one instance with one of the three solver/preconditioner pairs.

    Returns ``(KktSolution, SolveReport)``.  Raises :class:`NoConvergence`
    (with the report attached) when the iteration cap is hit.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; valid values are {', '.join(METHODS)}")
    krylov, kind, layout = METHODS[method]
    SolverConfig(krylov, tol, max_iter)
    factors = factors if factors is not None else BlockFactors(data)
    P = make_preconditioner(kind, data, factors)
    op, rhs = build_system(data, layout=layout)
    try:
        if krylov == "gmres":
            x, report = gmres(op.apply, rhs, P, tol=tol, max_iter=max_iter, AM=getattr(P, "split_apply", None))
        else:
            x, report = minres(op.apply, rhs, P, tol=tol, max_iter=max_iter)
    except NoConvergence as exc:
        exc.report.method = method
        exc.report.solve_counts = dict(P.solve_counts)
        if exc.x is not None:
            exc.report.kkt_residual = kkt_residual(data, KktSolution.from_vector(exc.x, data.n, data.m_B))
        raise
    report.method = method
    report.solve_counts = dict(sorted(Counter(P.solve_counts).items()))
    sol = KktSolution.from_vector(x, data.n, data.m_B)
    report.kkt_residual = kkt_residual(data, sol)
    return sol, report
