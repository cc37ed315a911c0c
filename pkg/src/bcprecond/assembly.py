"""P1 finite-element assembly of the boundary control problem.

All matrices are first assembled over every mesh node, then restricted to the
free nodes in :class:`~bcprecond.mesh.DofMap` order (interior first, control
boundary last).  Homogeneous Dirichlet data makes the restriction exact.
"""

import enum
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .mesh import build_mesh, classify_boundary
from .sparse import canonical_csr, coo_to_csr

__all__ = [
    "DesiredState",
    "ProblemData",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_boundary_mass",
    "assemble_coupling",
    "assemble_load",
    "assemble_forcing",
    "assemble_problem",
    "full_mass",
    "full_stiffness",
    "full_boundary_mass",
    "full_load",
]

_MASS_REF = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
_EDGE_MASS_REF = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
# P1 basis values at the three edge midpoints (m01, m12, m20)
_MIDPOINT_BASIS = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])


class DesiredState(enum.Enum):
    """Target states of the two test problems, supported on x <= 1/2, y <= 1/2."""

    INDICATOR = 1
    POLYNOMIAL_BUMP = 2

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(int(value))
        except ValueError:
            raise ValueError(f"invalid test problem {value!r}; valid values are 1, 2") from None

    def smooth_part(self, x, y):
        if self is DesiredState.INDICATOR:
            return np.ones_like(np.asarray(x, dtype=float))
        return (2.0 * x - 1.0) ** 2 * (2.0 * y - 1.0) ** 2

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.where((x <= 0.5) & (y <= 0.5), self.smooth_part(x, y), 0.0)


def _element_geometry(mesh):
    p = mesh.nodes[mesh.triangles]
    area = mesh.signed_areas()
    # gradients of the barycentric coordinates
    x, y = p[..., 0], p[..., 1]
    grads = np.stack(
        [
            np.stack([y[:, 1] - y[:, 2], x[:, 2] - x[:, 1]], axis=-1),
            np.stack([y[:, 2] - y[:, 0], x[:, 0] - x[:, 2]], axis=-1),
            np.stack([y[:, 0] - y[:, 1], x[:, 1] - x[:, 0]], axis=-1),
        ],
        axis=1,
    ) / (2.0 * area[:, None, None])
    return area, grads


def _scatter(connectivity, local, size):
    T = connectivity
    k = T.shape[1]
    rows = np.repeat(T, k, axis=1).ravel()
    cols = np.tile(T, (1, k)).ravel()
    return coo_to_csr(rows, cols, local.reshape(len(T), -1), (size, size))


def _restrict(A, rows, cols):
    return canonical_csr(A[rows][:, cols])


def full_mass(mesh, element_order=None):
    area, _ = _element_geometry(mesh)
    T = mesh.triangles
    if element_order is not None:
        T, area = T[element_order], area[element_order]
    return _scatter(T, area[:, None, None] * _MASS_REF, mesh.num_nodes)


def full_stiffness(mesh, element_order=None):
    area, grads = _element_geometry(mesh)
    T = mesh.triangles
    if element_order is not None:
        T, area, grads = T[element_order], area[element_order], grads[element_order]
    local = area[:, None, None] * np.einsum("eik,ejk->eij", grads, grads)
    return _scatter(T, local, mesh.num_nodes)


def full_boundary_mass(mesh, edges):
    """Consistent 1D P1 mass matrix over the given boundary edges, on all nodes."""
    lengths = np.linalg.norm(mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]], axis=1)
    return _scatter(edges, lengths[:, None, None] * _EDGE_MASS_REF, mesh.num_nodes)


def assemble_mass(mesh, dofmap):
    return _restrict(full_mass(mesh), dofmap.free_nodes, dofmap.free_nodes)


def assemble_stiffness(mesh, dofmap):
    return _restrict(full_stiffness(mesh), dofmap.free_nodes, dofmap.free_nodes)


def assemble_boundary_mass(mesh, dofmap, lumped=False):
    """Mass matrix of the control basis on the Neumann boundary.

    With ``lumped`` set, the row sums of the consistent matrix are placed on
    the diagonal.
    """
    if dofmap.m_B == 0:
        raise ValueError("control boundary has no free nodes (m_B = 0)")
    Mg = _restrict(full_boundary_mass(mesh, dofmap.gamma_edges), dofmap.control_nodes, dofmap.control_nodes)
    if lumped:
        Mg = sp.diags(np.asarray(Mg.sum(axis=1)).ravel(), format="csr")
    return Mg


def assemble_coupling(mesh, dofmap):
    """Coupling of the state basis (rows) with the control basis (columns) on Gamma."""
    B = full_boundary_mass(mesh, dofmap.gamma_edges)
    return _restrict(B, dofmap.free_nodes, dofmap.control_nodes)


def full_load(mesh, y_d):
    """Load vector of ``y_d`` over all mesh nodes, edge-midpoint quadrature.

    The piece of ``y_d`` used on a triangle is chosen from its centroid, so
    the discontinuity lines x = 1/2, y = 1/2 (mesh lines) are never sampled
    from the wrong side.
    """
    y_d = DesiredState.parse(y_d)
    area, _ = _element_geometry(mesh)
    p = mesh.nodes[mesh.triangles]
    centroid = p.mean(axis=1)
    inside = (centroid[:, 0] <= 0.5) & (centroid[:, 1] <= 0.5)
    mids = 0.5 * (p + np.roll(p, -1, axis=1))
    vals = y_d.smooth_part(mids[..., 0], mids[..., 1]) * inside[:, None]
    local = (area[:, None] / 3.0) * (vals @ _MIDPOINT_BASIS)
    b = np.zeros(mesh.num_nodes)
    np.add.at(b, mesh.triangles.ravel(), local.ravel())
    return b


def assemble_load(mesh, dofmap, y_d):
    return full_load(mesh, y_d)[dofmap.free_nodes]


def assemble_forcing(mesh, dofmap, f_rhs=None):
    """Load vector of the state forcing term; ``None`` means f = 0."""
    if f_rhs is None:
        return np.zeros(dofmap.n)
    area, _ = _element_geometry(mesh)
    p = mesh.nodes[mesh.triangles]
    mids = 0.5 * (p + np.roll(p, -1, axis=1))
    vals = np.asarray(f_rhs(mids[..., 0], mids[..., 1]), dtype=float)
    local = (area[:, None] / 3.0) * (vals @ _MIDPOINT_BASIS)
    f = np.zeros(mesh.num_nodes)
    np.add.at(f, mesh.triangles.ravel(), local.ravel())
    return f[dofmap.free_nodes]


@dataclass(frozen=True)
class ProblemData:
    """Assembled blocks of one discrete boundary control instance."""

    mesh: object
    dofmap: object
    M: sp.csr_matrix
    K: sp.csr_matrix
    M_Gamma: sp.csr_matrix
    N_Gamma: sp.csr_matrix
    b: np.ndarray
    f: np.ndarray
    beta: float
    y_d: DesiredState = DesiredState.INDICATOR
    lumped: bool = False

    @property
    def h(self):
        return self.mesh.h

    @property
    def n(self):
        return self.dofmap.n

    @property
    def n_I(self):
        return self.dofmap.n_I

    @property
    def m_B(self):
        return self.dofmap.m_B

    @property
    def dof(self):
        return 2 * self.n + self.m_B

    def with_beta(self, beta):
        return replace(self, beta=float(beta))

    def with_desired_state(self, y_d):
        y_d = DesiredState.parse(y_d)
        return replace(self, y_d=y_d, b=assemble_load(self.mesh, self.dofmap, y_d))


def assemble_problem(level, gamma, beta, problem=1, lumped=False, f_rhs=None):
    """Mesh, classify and assemble everything for one instance."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    mesh = build_mesh(level)
    dofmap = classify_boundary(mesh, gamma)
    y_d = DesiredState.parse(problem)
    return ProblemData(
        mesh=mesh,
        dofmap=dofmap,
        M=assemble_mass(mesh, dofmap),
        K=assemble_stiffness(mesh, dofmap),
        M_Gamma=assemble_boundary_mass(mesh, dofmap, lumped=lumped),
        N_Gamma=assemble_coupling(mesh, dofmap),
        b=assemble_load(mesh, dofmap, y_d),
        f=assemble_forcing(mesh, dofmap, f_rhs),
        beta=float(beta),
        y_d=y_d,
        lumped=lumped,
    )
