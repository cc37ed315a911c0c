"""Block-triangular preconditioning for elliptic Neumann boundary control.

Assembles the P1 finite-element KKT system of the boundary control problem
with mixed Dirichlet/Neumann conditions on the unit square and solves it with
GMRES (block-triangular preconditioner on the permuted system) or MINRES
(block-diagonal preconditioners on the symmetric system).
"""

__version__ = "0.1.0"

from .assembly import DesiredState, ProblemData, assemble_problem
from .krylov import NoConvergence, SolveReport, gmres, minres, solve_kkt
from .mesh import BoundaryConfig, DofMap, Mesh, build_mesh, classify_boundary
from .preconditioners import BlockFactors, BlockTriangular, DiagPearson, DiagRees
from .saddle import KktSolution, Layout, SaddleOperator, build_system, kkt_residual

__all__ = [
    "BlockFactors",
    "BlockTriangular",
    "BoundaryConfig",
    "DesiredState",
    "DiagPearson",
    "DiagRees",
    "DofMap",
    "KktSolution",
    "Layout",
    "Mesh",
    "NoConvergence",
    "ProblemData",
    "SaddleOperator",
    "SolveReport",
    "assemble_problem",
    "build_mesh",
    "build_system",
    "classify_boundary",
    "gmres",
    "kkt_residual",
    "minres",
    "solve_kkt",
]
