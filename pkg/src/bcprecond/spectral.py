"""Dense eigenvalue diagnostics of the block-triangular preconditioned system.

Only meant for small meshes: everything here forms dense matrices.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .saddle import Layout, SaddleOperator
from .preconditioners import BlockTriangular

__all__ = [
    "DimensionGuard",
    "EigReport",
    "BoundReport",
    "MAX_DENSE_DIM",
    "dense_blocks",
    "boundary_gram_dense",
    "eig_preconditioned",
    "schur_eigenpairs",
    "verify_rayleigh_formula",
    "block_structure_error",
    "bound_check",
]

MAX_DENSE_DIM = 3000


class DimensionGuard(ValueError):
    pass


def _guard(data):
    dim = 2 * data.n + data.m_B
    if dim > MAX_DENSE_DIM:
        raise DimensionGuard(f"system dimension {dim} exceeds the dense limit {MAX_DENSE_DIM}")


def dense_blocks(data):
    return {
        "M": data.M.toarray(),
        "K": data.K.toarray(),
        "M_Gamma": data.M_Gamma.toarray(),
        "N_Gamma": data.N_Gamma.toarray(),
    }


def boundary_gram_dense(data):
    """N_Gamma M_Gamma^-1 N_Gamma^T formed with a dense solve."""
    B = dense_blocks(data)
    N = B["N_Gamma"]
    return N @ np.linalg.solve(B["M_Gamma"], N.T)


@dataclass
class EigReport:
    n: int
    m_B: int
    eigenvalues: np.ndarray
    tol_unit: float
    unit_mask: np.ndarray
    formula_residuals: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def unit_count(self):
        return int(self.unit_mask.sum())

    @property
    def nonunit(self):
        return self.eigenvalues[~self.unit_mask]

    def write_csv(self, path):
        order = np.lexsort((self.eigenvalues.imag, self.eigenvalues.real))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["real", "imag", "unit"])
            for i in order:
                ev = self.eigenvalues[i]
                w.writerow([repr(float(ev.real)), repr(float(ev.imag)), int(self.unit_mask[i])])


def eig_preconditioned(data, tol_unit=1e-6, side="left"):
    """All eigenvalues of P_T^-1 A (``side="left"``) or A P_T^-1 (``"right"``)."""
    _guard(data)
    A = SaddleOperator(data, Layout.PERMUTED).to_sparse().toarray()
    P = BlockTriangular(data).to_sparse().toarray()
    if side == "left":
        T = np.linalg.solve(P, A)
    elif side == "right":
        T = np.linalg.solve(P.T, A.T).T
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    ev = np.linalg.eigvals(T).astype(complex)
    report = EigReport(data.n, data.m_B, ev, tol_unit, np.abs(ev - 1.0) <= tol_unit)
    return report


def schur_eigenpairs(data):
    """Eigenpairs of S x = mu K x through the standard problem for K^-1 S.

    S = K + beta^-1 M K^-1 M_gamma is the exact Schur complement of the
    permuted system and K its approximation.  Returns (mu, X) with the
    eigenvalues sorted by distance from 1 and real eigenvectors in columns.
    """
    _guard(data)
    B = dense_blocks(data)
    K, M = B["K"], B["M"]
    Mgam = boundary_gram_dense(data)
    S = K + M @ np.linalg.solve(K, Mgam) / data.beta
    mu, X = np.linalg.eig(np.linalg.solve(K, S))
    # rotate each vector to be real; the pencil is symmetric-definite
    phase = X[np.argmax(np.abs(X), axis=0), np.arange(X.shape[1])]
    X = (X / (phase / np.abs(phase))).real
    X /= np.linalg.norm(X, axis=0)
    order = np.argsort(np.abs(mu - 1.0))
    return mu[order], X[:, order]


def verify_rayleigh_formula(data):
    """Compare the non-unit Schur eigenvalues with their Rayleigh-quotient form.

    For each of the ``m_B`` eigenpairs furthest from 1 evaluates
    ``1 + x^T M_gamma x / (beta x^T K M^-1 K x)`` and returns the relative
    mismatches ``|mu - formula| / |mu|`` together with the eigenvalues.
    """
    mu, X = schur_eigenpairs(data)
    B = dense_blocks(data)
    K, M = B["K"], B["M"]
    Mgam = boundary_gram_dense(data)
    mu, X = mu[-data.m_B:], X[:, -data.m_B:]
    KX = K @ X
    num = np.einsum("ij,ij->j", X, Mgam @ X)
    den = data.beta * np.einsum("ij,ij->j", KX, np.linalg.solve(M, KX))
    formula = 1.0 + num / den
    return np.abs(mu - formula) / np.abs(mu), mu.real


def block_structure_error(data):
    """Max-norm distance of N M_Gamma^-1 N^T from blkdiag(0, M_Gamma)."""
    _guard(data)
    G = boundary_gram_dense(data)
    expected = np.zeros_like(G)
    expected[data.n_I:, data.n_I:] = data.M_Gamma.toarray()
    return float(np.abs(G - expected).max())


@dataclass(frozen=True)
class BoundReport:
    min_nonunit: float
    max_nonunit: float
    h: float
    beta: float

    @property
    def scaled_spread(self):
        """(max - 1) * beta * h, bounded by a constant if the upper estimate is sharp."""
        return (self.max_nonunit - 1.0) * self.beta * self.h


def bound_check(data, tol_unit=1e-6):
    report = eig_preconditioned(data, tol_unit)
    order = np.argsort(np.abs(report.eigenvalues - 1.0))
    outliers = report.eigenvalues[order[-data.m_B:]].real
    lo, hi = float(outliers.min()), float(outliers.max())
    if lo < 1.0 - 1e-8:
        raise ValueError(f"non-unit eigenvalue {lo!r} below 1")
    return BoundReport(lo, hi, data.h, data.beta)
