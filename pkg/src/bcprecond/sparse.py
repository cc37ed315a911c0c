"""Sparse linear-algebra kernel used by the preconditioners and Krylov solvers.

Matrices are stored as canonical ``scipy.sparse.csr_matrix`` objects (sorted
column indices, no duplicates, no explicit zeros).  SPD blocks are factored
once with SuperLU in symmetric mode, using a fixed minimum-degree ordering and
no pivoting, which makes the factorization an LDL^T-type Cholesky.
"""

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "NotSPDError",
    "SpdFactor",
    "coo_to_csr",
    "canonical_csr",
    "spmv",
    "factor_spd",
    "solve_spd",
    "read_matrix_market",
    "write_matrix_market",
]

# diagonal of U must stay above this fraction of max|diag(A)|
_PIVOT_RTOL = 1e-14


class NotSPDError(np.linalg.LinAlgError):
    """Raised when a block handed to :func:`factor_spd` is not SPD."""

    def __init__(self, name, reason):
        self.name = name
        super().__init__(f"block {name!r} is not symmetric positive definite: {reason}")


def coo_to_csr(rows, cols, vals, shape):
    """Compress coordinate triplets into a canonical CSR matrix.

    Duplicates are summed after sorting by (row, col, value), so the result
    is bit-identical for any permutation of the input triplets.
    """
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=float).ravel()
    nrows, ncols = shape
    if rows.size == 0:
        return sp.csr_matrix(shape, dtype=float)

    order = np.lexsort((vals, cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    key = rows * ncols + cols
    start = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    summed = np.add.reduceat(vals, start)
    urows, ucols = rows[start], cols[start]

    keep = summed != 0.0
    urows, ucols, summed = urows[keep], ucols[keep], summed[keep]
    indptr = np.zeros(nrows + 1, dtype=np.int64)
    np.add.at(indptr, urows + 1, 1)
    np.cumsum(indptr, out=indptr)
    A = sp.csr_matrix((summed, ucols, indptr), shape=shape)
    A.has_sorted_indices = True
    return A


def canonical_csr(A):
    """Return ``A`` as CSR with sorted indices and no stored zeros."""
    A = sp.csr_matrix(A, dtype=float, copy=True)
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    return A


def spmv(A, x):
    """Sparse matrix-vector product with a dimension check."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != A.shape[1]:
        raise ValueError(f"dimension mismatch: matrix is {A.shape}, vector has shape {x.shape}")
    return A @ x


class SpdFactor:
    """Reusable factorization of a sparse SPD matrix.

    ``solve`` allocates its own output, so one factor can serve concurrent
    callers.
    """

    ordering = "MMD_AT_PLUS_A"

    def __init__(self, A, name="A"):
        A = sp.csc_matrix(A, dtype=float)
        n, m = A.shape
        if n != m:
            raise NotSPDError(name, f"matrix is not square {A.shape}")
        self.name = name
        self.shape = A.shape
        if n == 0:
            self._lu = None
            return

        asym = abs(A - A.T)
        scale = abs(A).max()
        if asym.nnz and asym.max() > 1e-12 * scale:
            raise NotSPDError(name, "matrix is not symmetric")
        diag = A.diagonal()
        if np.any(diag <= 0):
            raise NotSPDError(name, "non-positive diagonal entry")

        try:
            lu = spla.splu(
                A,
                permc_spec=self.ordering,
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:  # exactly singular
            raise NotSPDError(name, str(exc)) from None

        pivots = lu.U.diagonal()
        if np.any(pivots <= _PIVOT_RTOL * diag.max()):
            raise NotSPDError(name, "non-positive pivot encountered (singular or indefinite)")
        self._lu = lu
        self.perm = lu.perm_c.copy()

    @property
    def nnz(self):
        return 0 if self._lu is None else self._lu.L.nnz + self._lu.U.nnz

    def solve(self, d):
        d = np.asarray(d, dtype=float)
        if d.shape[0] != self.shape[0]:
            raise ValueError(f"dimension mismatch: factor of {self.name!r} is {self.shape}, rhs has {d.shape}")
        if self._lu is None:
            return d.copy()
        return self._lu.solve(d)

    def __repr__(self):
        return f"SpdFactor({self.name!r}, shape={self.shape}, nnz={self.nnz})"


def factor_spd(A, name="A"):
    return SpdFactor(A, name=name)


def solve_spd(F, d):
    return F.solve(d)


def write_matrix_market(path, A, symmetric=False, comment=""):
    """Write a sparse matrix in Matrix Market coordinate format."""
    A = sp.coo_matrix(A)
    scipy.io.mmwrite(
        str(path), A, comment=comment, field="real",
        precision=17, symmetry="symmetric" if symmetric else "general",
    )


def read_matrix_market(path):
    return canonical_csr(scipy.io.mmread(str(path)))
