"""Command-line interface: ``bcprecond {assemble,solve,eig,bench,export}``.

Every run writes ``manifest.json`` with the fully resolved configuration.
Numerical outputs are deterministic; timings go to ``timing.json`` or
``timings.csv`` only.  Exit codes: 0 success, 1 solver non-convergence,
2 invalid input.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import assemble_problem
from .bench import BETAS, DEFAULT_LEVELS, METHOD_ORDER, BenchCase, default_cases, export_solution_fields, run_grid
from .krylov import METHODS, NoConvergence, solve_kkt
from .mesh import export_mesh
from .saddle import Layout, SaddleOperator
from .spectral import DimensionGuard, bound_check, eig_preconditioned, verify_rayleigh_formula
from .sparse import write_matrix_market

log = logging.getLogger("bcprecond")

EXIT_OK, EXIT_NO_CONVERGENCE, EXIT_INVALID = 0, 1, 2


def _csv_list(cast):
    def parse(text):
        return [cast(t) for t in str(text).split(",") if t.strip()]
    return parse


def _add_common(p):
    p.add_argument("--config", help="file of key=value lines; command-line flags take precedence")
    p.add_argument("--level", type=int, default=5, help="refinement level k, mesh size h = 2^-k (default 5)")
    p.add_argument("--gamma", type=int, choices=(1, 2, 3), default=1, help="control boundary configuration (default 1)")
    p.add_argument("--beta", type=float, default=1e-2, help="regularization parameter (default 1e-2)")
    p.add_argument("--problem", type=int, choices=(1, 2), default=1, help="test problem / desired state (default 1)")
    p.add_argument("--lump-boundary-mass", action="store_true", help="use the row-sum lumped boundary mass matrix")
    p.add_argument("--out", default="out", help="output directory (default ./out)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _add_solver(p):
    p.add_argument("--method", choices=tuple(METHODS), default="gmres-pt", help="solver and preconditioner (default gmres-pt)")
    p.add_argument("--tol", type=float, default=1e-6, help="relative residual tolerance (default 1e-6)")
    p.add_argument("--max-iter", type=int, default=2000, help="iteration cap (default 2000)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bcprecond",
        description="Preconditioned Krylov solvers for elliptic Neumann boundary control with mixed boundary conditions.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = sub.choices

    p = sub.add_parser("assemble", help="assemble and export the blocks and both KKT layouts (Matrix Market)")
    _add_common(p)

    p = sub.add_parser("solve", help="solve one instance with one method")
    _add_common(p)
    _add_solver(p)

    p = sub.add_parser("eig", help="dense spectrum of the block-triangular preconditioned matrix (small meshes)")
    _add_common(p)
    p.add_argument("--tol-unit", type=float, default=1e-6, help="clustering tolerance around 1 (default 1e-6)")

    p = sub.add_parser("bench", help="run the iteration-count grid and write markdown and CSV tables")
    _add_common(p)
    _add_solver(p)
    p.add_argument("--levels", type=_csv_list(int), default=list(DEFAULT_LEVELS), help="comma-separated levels (default 5,6,7,8)")
    p.add_argument("--gammas", type=_csv_list(int), default=[1, 2, 3], help="comma-separated configurations (default 1,2,3)")
    p.add_argument("--betas", type=_csv_list(float), default=list(BETAS), help="comma-separated beta values")
    p.add_argument("--problems", type=_csv_list(int), default=[1, 2], help="comma-separated test problems (default 1,2)")
    p.add_argument("--methods", type=_csv_list(str), default=list(METHOD_ORDER), help="comma-separated methods")
    p.add_argument("--workers", type=int, default=1, help="worker threads (default 1)")

    p = sub.add_parser("export", help="export the mesh and the computed state/control fields")
    _add_common(p)
    _add_solver(p)
    return parser


def _read_config(path):
    cfg = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            cfg[key.replace("-", "_")] = value
    return cfg


def _parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = parser.subcommands[args.command]
        try:
            cfg = _read_config(args.config)
        except OSError as exc:
            parser.error(f"cannot read config file: {exc}")
        except ValueError as exc:
            parser.error(str(exc))
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(cfg) - known)
        if unknown:
            parser.error(f"unknown config keys: {', '.join(unknown)}")
        for key in ("lump_boundary_mass", "verbose"):
            if key in cfg:
                cfg[key] = cfg[key].lower() in ("1", "true", "yes", "on")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    _validate(parser, args)
    return args


def _validate(parser, args):
    def check(ok, msg):
        if not ok:
            parser.error(msg)

    check(args.level >= 1, f"--level must be >= 1, got {args.level}")
    check(args.gamma in (1, 2, 3), f"invalid --gamma {args.gamma}; valid values are 1, 2, 3")
    check(args.problem in (1, 2), f"invalid --problem {args.problem}; valid values are 1, 2")
    check(args.beta > 0, f"--beta must be positive, got {args.beta}")
    if hasattr(args, "tol"):
        check(args.method in METHODS, f"invalid --method {args.method}; valid values are {', '.join(METHODS)}")
        check(args.tol > 0, f"--tol must be positive, got {args.tol}")
        check(args.max_iter >= 1, f"--max-iter must be >= 1, got {args.max_iter}")
    if args.command == "bench":
        check(all(k >= 1 for k in args.levels) and args.levels, "--levels must be positive integers")
        check(all(g in (1, 2, 3) for g in args.gammas), "invalid --gammas; valid values are 1, 2, 3")
        check(all(p in (1, 2) for p in args.problems), "invalid --problems; valid values are 1, 2")
        check(all(b > 0 for b in args.betas), "--betas must be positive")
        bad = [m for m in args.methods if m not in METHODS]
        check(not bad, f"invalid --methods {', '.join(bad)}; valid values are {', '.join(METHODS)}")
        check(args.workers >= 1, "--workers must be >= 1")
    if args.command == "eig":
        check(args.tol_unit > 0, "--tol-unit must be positive")


def _manifest(args):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("config", "verbose")}
    cfg["version"] = __version__
    return cfg


def _dump(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_vector(path, v):
    with open(path, "w") as fh:
        for x in v:
            fh.write(f"{float(x)!r}\n")


def _assemble(args):
    return assemble_problem(args.level, args.gamma, args.beta, problem=args.problem, lumped=args.lump_boundary_mass)


def cmd_assemble(args, out):
    data = _assemble(args)
    write_matrix_market(out / "M.mtx", data.M, symmetric=True)
    write_matrix_market(out / "K.mtx", data.K, symmetric=True)
    write_matrix_market(out / "M_Gamma.mtx", data.M_Gamma, symmetric=True)
    write_matrix_market(out / "N_Gamma.mtx", data.N_Gamma)
    write_matrix_market(out / "kkt_original.mtx", SaddleOperator(data, Layout.ORIGINAL).to_sparse(), symmetric=True)
    write_matrix_market(out / "kkt_permuted.mtx", SaddleOperator(data, Layout.PERMUTED).to_sparse())
    _write_vector(out / "b.txt", data.b)
    _write_vector(out / "f.txt", data.f)
    summary = {"n": data.n, "n_I": data.n_I, "m_B": data.m_B, "dof": data.dof, "h": data.h}
    _dump(out / "summary.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _report_dict(report):
    return {
        "method": report.method,
        "iterations": report.iterations,
        "converged": report.converged,
        "kkt_residual": report.kkt_residual,
        "solve_counts": report.solve_counts,
        "final_relative_residual": report.residual_history[-1],
    }


def cmd_solve(args, out):
    data = _assemble(args)
    try:
        sol, report = solve_kkt(data, args.method, tol=args.tol, max_iter=args.max_iter)
    except NoConvergence as exc:
        _dump(out / "report.json", _report_dict(exc.report))
        exc.report.write_csv(out / "residuals.csv")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    summary = _report_dict(report)
    summary.update(n=data.n, m_B=data.m_B, dof=data.dof)
    _dump(out / "report.json", summary)
    _dump(out / "timing.json", {"krylov_seconds": report.wall_time})
    report.write_csv(out / "residuals.csv")
    for name in ("y", "u", "p"):
        _write_vector(out / f"{name}.txt", getattr(sol, name))
    print(f"{args.method}: {report.iterations} iterations, kkt residual {report.kkt_residual:.3e}")
    return EXIT_OK


def cmd_eig(args, out):
    data = _assemble(args)
    try:
        report = eig_preconditioned(data, tol_unit=args.tol_unit)
        residuals, _ = verify_rayleigh_formula(data)
        bounds = bound_check(data, tol_unit=args.tol_unit)
    except DimensionGuard as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    report.write_csv(out / "eigenvalues.csv")
    nonunit = report.nonunit
    summary = {
        "n": data.n,
        "m_B": data.m_B,
        "dimension": int(report.eigenvalues.size),
        "unit_count": report.unit_count,
        "nonunit_count": int(nonunit.size),
        "tol_unit": args.tol_unit,
        "max_imag_nonunit": float(np.abs(nonunit.imag).max()) if nonunit.size else 0.0,
        "min_nonunit": bounds.min_nonunit,
        "max_nonunit": bounds.max_nonunit,
        "scaled_spread": bounds.scaled_spread,
        "max_formula_residual": float(residuals.max()) if residuals.size else 0.0,
    }
    _dump(out / "eig_summary.json", summary)
    print(f"unit_count = {report.unit_count} (2n = {2 * data.n}), non-unit = {nonunit.size} (m_B = {data.m_B})")
    return EXIT_OK


def cmd_bench(args, out):
    cases = default_cases(args.problems, args.gammas, args.betas, args.levels, args.methods)
    table = run_grid(cases, tol=args.tol, max_iter=args.max_iter, workers=args.workers, lumped=args.lump_boundary_mass)
    table.write_csv(out / "bench.csv", with_time=False)
    table.write_csv(out / "timings.csv", with_time=True)
    with open(out / "tables.md", "w") as fh:
        for p, g in table.groups():
            fh.write(table.to_markdown(p, g, with_time=False) + "\n")
    with open(out / "tables_timed.md", "w") as fh:
        for p, g in table.groups():
            fh.write(table.to_markdown(p, g, with_time=True) + "\n")
    print((out / "tables.md").read_text(), end="")
    return EXIT_OK if all(r.converged for r in table) else EXIT_NO_CONVERGENCE


def cmd_export(args, out):
    case = BenchCase(args.problem, args.gamma, args.level, args.beta, args.method)
    data = _assemble(args)
    export_mesh(data.mesh, out / "nodes.txt", out / "elements.txt")
    try:
        state, control, _, report = export_solution_fields(
            case, out, tol=args.tol, max_iter=args.max_iter, lumped=args.lump_boundary_mass
        )
    except NoConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    print(f"wrote {state.name}, {control.name} ({report.iterations} iterations)")
    return EXIT_OK


COMMANDS = {"assemble": cmd_assemble, "solve": cmd_solve, "eig": cmd_eig, "bench": cmd_bench, "export": cmd_export}


def main(argv=None):
    try:
        args = _parse(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "manifest.json", _manifest(args))
    try:
        return COMMANDS[args.command](args, out)
    except NoConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
