"""KKT saddle-point system of the discrete boundary control problem.

Two block layouts of the same system are supported.  ``ORIGINAL`` is the
symmetric indefinite optimality system::

    [ M    0        K    ] [y]   [b]
    [ 0    beta*Mg  -N^T ] [u] = [0]
    [ K    -N       0    ] [p]   [f]

``PERMUTED`` swaps the first and third block rows::

    [ K    -N       0    ] [y]   [f]
    [ 0    beta*Mg  -N^T ] [u] = [0]
    [ M    0        K    ] [p]   [b]
"""

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .sparse import spmv

__all__ = ["Layout", "KktSolution", "SaddleOperator", "build_system", "kkt_residual"]


class Layout(enum.Enum):
    ORIGINAL = "original"
    PERMUTED = "permuted"


@dataclass
class KktSolution:
    y: np.ndarray
    u: np.ndarray
    p: np.ndarray

    @classmethod
    def from_vector(cls, x, n, m_B):
        x = np.asarray(x, dtype=float)
        if x.shape != (2 * n + m_B,):
            raise ValueError(f"expected a vector of length {2 * n + m_B}, got shape {x.shape}")
        return cls(x[:n].copy(), x[n:n + m_B].copy(), x[n + m_B:].copy())

    @property
    def vector(self):
        return np.concatenate([self.y, self.u, self.p])


class SaddleOperator:
    """Matrix-free block operator over the stored blocks of a :class:`ProblemData`."""

    def __init__(self, data, layout=Layout.ORIGINAL):
        self.data = data
        self.layout = Layout(layout)
        self.n = data.n
        self.m_B = data.m_B
        self.beta = data.beta
        self.shape = (2 * self.n + self.m_B,) * 2
        self.matvecs = 0

    @property
    def block_sizes(self):
        return (self.n, self.m_B, self.n)

    def split(self, v):
        n, m = self.n, self.m_B
        return v[:n], v[n:n + m], v[n + m:]

    def apply(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.shape[1],):
            raise ValueError(f"dimension mismatch: operator is {self.shape}, vector has shape {v.shape}")
        d = self.data
        y, u, p = self.split(v)
        state = spmv(d.K, y) - spmv(d.N_Gamma, u)
        control = self.beta * spmv(d.M_Gamma, u) - spmv(d.N_Gamma.T, p)
        adjoint = spmv(d.M, y) + spmv(d.K, p)
        self.matvecs += 1
        if self.layout is Layout.ORIGINAL:
            return np.concatenate([adjoint, control, state])
        return np.concatenate([state, control, adjoint])

    __call__ = apply

    def to_sparse(self):
        """Monolithic sparse matrix, for export and dense diagnostics only."""
        d = self.data
        rows = {
            "state": [d.K, -d.N_Gamma, None],
            "control": [None, self.beta * d.M_Gamma, -d.N_Gamma.T],
            "adjoint": [d.M, None, d.K],
        }
        order = ("adjoint", "control", "state") if self.layout is Layout.ORIGINAL else ("state", "control", "adjoint")
        return sp.bmat([rows[r] for r in order], format="csr")


def build_system(data, y_d=None, layout=Layout.ORIGINAL):
    """Return the operator and right-hand side for one layout.

    ``y_d`` overrides the desired state stored in ``data``.
    """
    if y_d is not None:
        data = data.with_desired_state(y_d)
    op = SaddleOperator(data, layout)
    zeros = np.zeros(data.m_B)
    if op.layout is Layout.ORIGINAL:
        rhs = np.concatenate([data.b, zeros, data.f])
    else:
        rhs = np.concatenate([data.f, zeros, data.b])
    return op, rhs


def kkt_residual(data, solution, rhs=None):
    """Relative residual of (y, u, p) in the original layout.

    ``rhs`` is the original-layout right-hand side; it defaults to the one
    built from ``data``.  When ``rhs`` is zero the absolute norm is returned.
    """
    op, default_rhs = build_system(data, layout=Layout.ORIGINAL)
    rhs = default_rhs if rhs is None else np.asarray(rhs, dtype=float)
    x = solution.vector if isinstance(solution, KktSolution) else np.asarray(solution, dtype=float)
    r = np.linalg.norm(rhs - op.apply(x))
    scale = np.linalg.norm(rhs)
    return float(r / scale) if scale > 0 else float(r)
