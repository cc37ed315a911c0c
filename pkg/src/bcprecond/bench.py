"""Iteration-count benchmark over boundary configurations, beta, mesh levels and solvers."""

import csv
import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble_problem
from .krylov import METHODS, NoConvergence, solve_kkt
from .mesh import BoundaryConfig, build_mesh, classify_boundary, gamma_arclength
from .preconditioners import BlockFactors

log = logging.getLogger(__name__)

__all__ = [
    "BenchCase",
    "BenchResult",
    "BenchTable",
    "REFERENCE_ITERATIONS",
    "DEFAULT_LEVELS",
    "BETAS",
    "default_cases",
    "run_grid",
    "dof_for_level",
    "nearest_level",
    "export_solution_fields",
]

DEFAULT_LEVELS = (5, 6, 7, 8)
BETAS = (1e-2, 1e-4, 1e-6)
METHOD_ORDER = ("minres-pd1", "minres-pd2", "gmres-pt")
METHOD_LABELS = {"minres-pd1": "MINRES(P_D,1)", "minres-pd2": "MINRES(P_D,2)", "gmres-pt": "GMRES(P_T)"}

# Reference iteration counts: (test problem, gamma) -> rows of
# (DoF, {method: counts for beta = 1e-2, 1e-4, 1e-6}).
REFERENCE_ITERATIONS = {
    (1, 1): [
        (4257, {"minres-pd1": (9, 21, 68), "minres-pd2": (23, 45, 63), "gmres-pt": (3, 5, 7)}),
        (16705, {"minres-pd1": (9, 19, 59), "minres-pd2": (25, 49, 73), "gmres-pt": (3, 5, 7)}),
        (66177, {"minres-pd1": (9, 15, 53), "minres-pd2": (27, 57, 85), "gmres-pt": (3, 5, 6)}),
        (263425, {"minres-pd1": (9, 15, 47), "minres-pd2": (27, 57, 88), "gmres-pt": (3, 4, 6)}),
    ],
    (1, 2): [
        (4289, {"minres-pd1": (11, 28, 114), "minres-pd2": (29, 55, 75), "gmres-pt": (4, 6, 9)}),
        (16769, {"minres-pd1": (11, 29, 101), "minres-pd2": (29, 66, 89), "gmres-pt": (4, 6, 8)}),
        (66305, {"minres-pd1": (11, 23, 97), "minres-pd2": (33, 76, 105), "gmres-pt": (4, 5, 7)}),
        (263681, {"minres-pd1": (11, 23, 83), "minres-pd2": (35, 87, 125), "gmres-pt": (4, 5, 7)}),
    ],
    (1, 3): [
        (4321, {"minres-pd1": (19, 55, 299), "minres-pd2": (47, 87, 127), "gmres-pt": (5, 9, 25)}),
        (16833, {"minres-pd1": (17, 55, 365), "minres-pd2": (49, 115, 185), "gmres-pt": (5, 9, 22)}),
        (66433, {"minres-pd1": (17, 57, 393), "minres-pd2": (53, 139, 257), "gmres-pt": (5, 8, 17)}),
        (263937, {"minres-pd1": (15, 55, 393), "minres-pd2": (54, 163, 348), "gmres-pt": (4, 8, 14)}),
    ],
    (2, 1): [
        (4257, {"minres-pd1": (9, 19, 63), "minres-pd2": (21, 41, 55), "gmres-pt": (4, 6, 12)}),
        (16705, {"minres-pd1": (9, 15, 54), "minres-pd2": (21, 45, 71), "gmres-pt": (4, 6, 8)}),
        (66177, {"minres-pd1": (9, 13, 49), "minres-pd2": (23, 47, 75), "gmres-pt": (4, 6, 8)}),
        (263425, {"minres-pd1": (9, 13, 37), "minres-pd2": (25, 53, 77), "gmres-pt": (4, 6, 8)}),
    ],
    (2, 2): [
        (4289, {"minres-pd1": (11, 23, 95), "minres-pd2": (27, 51, 67), "gmres-pt": (5, 8, 16)}),
        (16769, {"minres-pd1": (11, 21, 89), "minres-pd2": (29, 63, 85), "gmres-pt": (5, 8, 16)}),
        (66305, {"minres-pd1": (9, 23, 83), "minres-pd2": (29, 67, 95), "gmres-pt": (5, 8, 16)}),
        (263681, {"minres-pd1": (9, 23, 77), "minres-pd2": (31, 75, 113), "gmres-pt": (5, 8, 16)}),
    ],
    (2, 3): [
        (4321, {"minres-pd1": (15, 50, 262), "minres-pd2": (45, 81, 105), "gmres-pt": (6, 13, 34)}),
        (16833, {"minres-pd1": (17, 48, 293), "minres-pd2": (45, 99, 153), "gmres-pt": (6, 14, 36)}),
        (66433, {"minres-pd1": (13, 51, 298), "minres-pd2": (49, 117, 211), "gmres-pt": (6, 14, 36)}),
        (263937, {"minres-pd1": (13, 43, 302), "minres-pd2": (51, 143, 284), "gmres-pt": (6, 14, 36)}),
    ],
}


@dataclass(frozen=True, order=True)
class BenchCase:
    test_problem: int
    gamma: int
    level: int
    beta: float
    method: str

    def __post_init__(self):
        if self.test_problem not in (1, 2):
            raise ValueError(f"invalid test problem {self.test_problem!r}; valid values are 1, 2")
        BoundaryConfig.parse(self.gamma)
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; valid values are {', '.join(METHODS)}")
        if int(self.level) < 1 or not self.beta > 0:
            raise ValueError(f"invalid level/beta: {self.level}, {self.beta}")

    @property
    def case_id(self):
        return f"p{self.test_problem}-g{self.gamma}-k{self.level}-b{self.beta:.0e}-{self.method}"


@dataclass
class BenchResult:
    case: BenchCase
    dof: int
    iterations: int
    converged: bool
    krylov_seconds: float
    factor_seconds: float
    kkt_residual: float
    solve_counts: dict = field(default_factory=dict)

    @property
    def cell(self):
        return str(self.iterations) if self.converged else "DNF"


def default_cases(problems=(1, 2), gammas=(1, 2, 3), betas=BETAS, levels=DEFAULT_LEVELS, methods=METHOD_ORDER):
    return [
        BenchCase(p, g, k, b, m)
        for p, g, k, b, m in itertools.product(problems, gammas, levels, betas, methods)
    ]


def dof_for_level(level, gamma):
    dm = classify_boundary(build_mesh(level), gamma)
    return dm.total_dof


def nearest_level(reference_dof, gamma, levels=DEFAULT_LEVELS):
    return min(levels, key=lambda k: (abs(dof_for_level(k, gamma) - reference_dof), k))


class BenchTable:
    """Results keyed by case; renders markdown tables in the reference layout."""

    def __init__(self, results=()):
        self.results = {}
        for r in results:
            if r.case in self.results:
                raise ValueError(f"duplicate case {r.case.case_id}")
            self.results[r.case] = r

    def __len__(self):
        return len(self.results)

    def __iter__(self):
        return iter(sorted(self.results.values(), key=lambda r: r.case))

    def get(self, test_problem, gamma, level, beta, method):
        return self.results.get(BenchCase(test_problem, gamma, level, beta, method))

    def iterations(self, test_problem, gamma, level, beta, method):
        r = self.get(test_problem, gamma, level, beta, method)
        return None if r is None or not r.converged else r.iterations

    def groups(self):
        return sorted({(c.test_problem, c.gamma) for c in self.results})

    def to_markdown(self, test_problem, gamma, with_time=True):
        cases = [c for c in self.results if (c.test_problem, c.gamma) == (test_problem, gamma)]
        levels = sorted({c.level for c in cases})
        betas = sorted({c.beta for c in cases}, reverse=True)
        methods = [m for m in METHOD_ORDER if any(c.method == m for c in cases)]
        header = ["DoF / beta"] + [f"{METHOD_LABELS[m]} {b:.0e}" for m in methods for b in betas]
        lines = [
            f"Test problem {test_problem}, Gamma_{gamma}",
            "",
            "| " + " | ".join(header) + " |",
            "|" + "---|" * len(header),
        ]
        for k in levels:
            dofs = {r.dof for r in self.results.values() if r.case.level == k and r.case.gamma == gamma}
            row = [str(dofs.pop()) if dofs else f"k={k}"]
            for m in methods:
                for b in betas:
                    r = self.get(test_problem, gamma, k, b, m)
                    if r is None:
                        row.append("")
                    elif with_time and r.converged:
                        row.append(f"{r.iterations} ({r.krylov_seconds:.2f})")
                    else:
                        row.append(r.cell)
            lines.append("| " + " | ".join(row) + " |")
        return "\n".join(lines) + "\n"

    def write_csv(self, path, with_time=True):
        cols = ["case_id", "test_problem", "gamma", "level", "dof", "beta", "method", "iterations", "converged", "kkt_residual"]
        if with_time:
            cols += ["krylov_seconds", "factor_seconds"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self:
                c = r.case
                row = [c.case_id, c.test_problem, c.gamma, c.level, r.dof, repr(c.beta), c.method,
                       r.iterations, int(r.converged), f"{r.kkt_residual:.6e}"]
                if with_time:
                    row += [f"{r.krylov_seconds:.6f}", f"{r.factor_seconds:.6f}"]
                w.writerow(row)


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def _run_group(level, gamma, cases, tol, max_iter, lumped):
    base = assemble_problem(level, gamma, cases[0].beta, problem=cases[0].test_problem, lumped=lumped)
    factors = BlockFactors(base)
    _, shared = _timed(lambda: (factors.K, factors.M, factors.M_Gamma))
    khat_time = {}
    loads = {}
    out = []
    for case in cases:
        if case.test_problem not in loads:
            loads[case.test_problem] = base.with_desired_state(case.test_problem)
        data = loads[case.test_problem].with_beta(case.beta)
        factor_seconds = shared
        if case.method == "minres-pd2":
            if case.beta not in khat_time:
                _, khat_time[case.beta] = _timed(lambda: factors.K_hat(case.beta))
            factor_seconds += khat_time[case.beta]
        try:
            _, report = solve_kkt(data, case.method, tol=tol, max_iter=max_iter, factors=factors)
        except NoConvergence as exc:
            report = exc.report
            log.warning("case %s did not converge", case.case_id)
        log.info("%s: %s iterations", case.case_id, report.iterations if report.converged else "DNF")
        out.append(BenchResult(
            case=case,
            dof=base.dof,
            iterations=report.iterations,
            converged=report.converged,
            krylov_seconds=report.wall_time,
            factor_seconds=factor_seconds,
            kkt_residual=report.kkt_residual,
            solve_counts=report.solve_counts,
        ))
    return out


def run_grid(cases, tol=1e-6, max_iter=2000, workers=1, lumped=False):
    """Run every case; each (level, gamma) instance is assembled and factored once."""
    cases = list(cases)
    if len(set(cases)) != len(cases):
        raise ValueError("duplicate cases in the grid")
    groups = {}
    for c in cases:
        groups.setdefault((c.level, c.gamma), []).append(c)
    jobs = [(k, g, cs, tol, max_iter, lumped) for (k, g), cs in sorted(groups.items())]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(lambda a: _run_group(*a), jobs))
    else:
        chunks = [_run_group(*a) for a in jobs]
    return BenchTable(itertools.chain.from_iterable(chunks))


def export_solution_fields(case, out_dir, tol=1e-6, max_iter=2000, lumped=False):
    """Solve one case and write the state on the full grid and the control along Gamma.

    Writes ``<case_id>_state.csv`` ("x,y,value", Dirichlet nodes set to 0)
    and ``<case_id>_control.csv`` ("s,value", s the arclength on Gamma).
    Returns the two paths and the solution.
    """
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = assemble_problem(case.level, case.gamma, case.beta, problem=case.test_problem, lumped=lumped)
    sol, report = solve_kkt(data, case.method, tol=tol, max_iter=max_iter)
    mesh, dm = data.mesh, data.dofmap

    y_full = np.zeros(mesh.num_nodes)
    y_full[dm.free_nodes] = sol.y
    state_path = out_dir / f"{case.case_id}_state.csv"
    with open(state_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "value"])
        for (x, y), v in zip(mesh.nodes, y_full):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(v))])

    s = gamma_arclength(mesh, dm)
    control_path = out_dir / f"{case.case_id}_control.csv"
    with open(control_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "value"])
        for si, ui in zip(s, sol.u):
            w.writerow([repr(float(si)), repr(float(ui))])
    return state_path, control_path, sol, report
