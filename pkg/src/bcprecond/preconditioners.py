"""Block preconditioners for the boundary control KKT system.

``BlockTriangular`` acts on the permuted layout (y, u, p) and is the upper
block-triangular matrix obtained by replacing the Schur complement with K::

    [ K   -N        0   ]
    [ 0   beta*Mg   -N^T]
    [ 0   0         K   ]

``DiagRees`` and ``DiagPearson`` are block-diagonal, SPD, and act on the
original layout: blkdiag(M, beta*Mg, S_i) with S_1 = K M^-1 K and
S_2 = Khat M^-1 Khat, Khat = K + sqrt(h/beta) N Mg^-1 N^T.
"""

import enum
import threading
from collections import Counter

import numpy as np
import scipy.sparse as sp

from .sparse import canonical_csr, factor_spd, spmv

__all__ = [
    "PreconditionerKind",
    "BlockFactors",
    "BlockTriangular",
    "DiagRees",
    "DiagPearson",
    "boundary_gram",
    "matching_stiffness",
    "make_preconditioner",
]


class PreconditionerKind(enum.Enum):
    BLOCK_TRIANGULAR = "pt"
    DIAG_REES = "pd1"
    DIAG_PEARSON = "pd2"


def boundary_gram(data):
    """Sparse N_Gamma Mg^-1 N_Gamma^T.

    For the consistent trace discretization this is Mg placed on the Gamma
    diagonal block; for a lumped Mg it is formed as N D^-1 N^T.
    """
    N, Mg = data.N_Gamma, data.M_Gamma
    n, n_I = data.n, data.n_I
    offdiag = Mg - sp.diags(Mg.diagonal())
    if offdiag.count_nonzero() == 0:
        return canonical_csr(N @ sp.diags(1.0 / Mg.diagonal()) @ N.T)
    top, bottom = N[:n_I], N[n_I:]
    if top.count_nonzero() == 0 and (bottom != Mg).count_nonzero() == 0:
        return canonical_csr(sp.block_diag([sp.csr_matrix((n_I, n_I)), Mg]))
    # general fallback: dense columns of Mg^-1 N^T
    F = factor_spd(Mg, "M_Gamma")
    X = np.column_stack([F.solve(col) for col in N.T.toarray().T]) if n else np.zeros((data.m_B, 0))
    G = N @ X
    return canonical_csr(sp.csr_matrix(0.5 * (G + G.T)))


def matching_stiffness(data, beta=None):
    beta = data.beta if beta is None else beta
    return canonical_csr(data.K + np.sqrt(data.h / beta) * boundary_gram(data))


class BlockFactors:
    """Lazily built, shareable factorizations of the blocks of one mesh instance.

    K, M and Mg do not depend on beta and are reused for every beta; the
    matching stiffness Khat is cached per beta.
    """

    def __init__(self, data):
        self.data = data
        self._cache = {}
        self._lock = threading.Lock()

    def _get(self, key, build):
        with self._lock:
            if key not in self._cache:
                self._cache[key] = build()
            return self._cache[key]

    @property
    def K(self):
        return self._get("K", lambda: factor_spd(self.data.K, "K"))

    @property
    def M(self):
        return self._get("M", lambda: factor_spd(self.data.M, "M"))

    @property
    def M_Gamma(self):
        return self._get("M_Gamma", lambda: factor_spd(self.data.M_Gamma, "M_Gamma"))

    def K_hat(self, beta):
        beta = float(beta)
        return self._get(("K_hat", beta), lambda: factor_spd(matching_stiffness(self.data, beta), "K_hat"))

    def compatible(self, data):
        return data.mesh is self.data.mesh and data.dofmap is self.data.dofmap and data.lumped == self.data.lumped


class _BlockPreconditioner:
    kind = None
    layout = None

    def __init__(self, data, factors=None):
        if factors is None:
            factors = BlockFactors(data)
        elif not factors.compatible(data):
            raise ValueError("factors were built for a different mesh or boundary configuration")
        self.data = data
        self.factors = factors
        self.beta = data.beta
        self.n, self.m_B = data.n, data.m_B
        self.shape = (2 * self.n + self.m_B,) * 2
        self.solve_counts = Counter()
        self.applications = 0
        self._setup()

    def _setup(self):
        self.factors.K
        self.factors.M_Gamma

    def _solve(self, name, factor, rhs):
        self.solve_counts[name] += 1
        return factor.solve(rhs)

    def _split(self, d):
        d = np.asarray(d, dtype=float)
        if d.shape != (self.shape[0],):
            raise ValueError(f"dimension mismatch: preconditioner is {self.shape}, vector has shape {d.shape}")
        n, m = self.n, self.m_B
        return d[:n], d[n:n + m], d[n + m:]

    def __call__(self, d):
        self.applications += 1
        return self.apply_inverse(d)

    def per_application(self):
        """Average factor solves per application, by block name."""
        if not self.applications:
            return {}
        return {k: v / self.applications for k, v in sorted(self.solve_counts.items())}


class BlockTriangular(_BlockPreconditioner):
    kind = PreconditionerKind.BLOCK_TRIANGULAR
    layout = "permuted"

    def apply_inverse(self, d):
        d1, d2, d3 = self._split(d)
        f = self.factors
        d = self.data
        v3 = self._solve("K", f.K, d3)
        v2 = self._solve("M_Gamma", f.M_Gamma, d2 + spmv(d.N_Gamma.T, v3)) / self.beta
        v1 = self._solve("K", f.K, d1 + spmv(d.N_Gamma, v2))
        return np.concatenate([v1, v2, v3])

    def split_apply(self, v):
        """Return ``(z, A z)`` for ``z = P^-1 v`` and the permuted operator A.

        A - P has a single nonzero block, M in the (adjoint, state) position,
        so ``A z = v + [0, 0, M z_y]``.  At small beta ``z`` is many orders of
        magnitude larger than ``v``, and forming ``A z`` directly would cancel
        most of its digits.
        """
        z = self(v)
        w = np.array(v, dtype=float)
        w[self.n + self.m_B:] += spmv(self.data.M, z[:self.n])
        return z, w

    def to_sparse(self):
        d = self.data
        return sp.bmat(
            [[d.K, -d.N_Gamma, None], [None, self.beta * d.M_Gamma, -d.N_Gamma.T], [None, None, d.K]],
            format="csr",
        )


class DiagRees(_BlockPreconditioner):
    kind = PreconditionerKind.DIAG_REES
    layout = "original"

    def _setup(self):
        super()._setup()
        self.factors.M

    def _schur_inverse(self, d3):
        f = self.factors
        t = self._solve("K", f.K, d3)
        return self._solve("K", f.K, spmv(self.data.M, t))

    def apply_inverse(self, d):
        d1, d2, d3 = self._split(d)
        f = self.factors
        z1 = self._solve("M", f.M, d1)
        z2 = self._solve("M_Gamma", f.M_Gamma, d2) / self.beta
        z3 = self._schur_inverse(d3)
        return np.concatenate([z1, z2, z3])


class DiagPearson(DiagRees):
    kind = PreconditionerKind.DIAG_PEARSON

    def _setup(self):
        self.factors.M
        self.factors.M_Gamma
        self.K_hat_factor = self.factors.K_hat(self.beta)

    def _schur_inverse(self, d3):
        F = self.K_hat_factor
        t = self._solve("K_hat", F, d3)
        return self._solve("K_hat", F, spmv(self.data.M, t))


_KINDS = {
    PreconditionerKind.BLOCK_TRIANGULAR: BlockTriangular,
    PreconditionerKind.DIAG_REES: DiagRees,
    PreconditionerKind.DIAG_PEARSON: DiagPearson,
}


def make_preconditioner(kind, data, factors=None):
    return _KINDS[PreconditionerKind(kind)](data, factors)
