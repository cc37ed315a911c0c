"""Uniform triangulation of the unit square and boundary classification."""

import enum
from dataclasses import dataclass

import numpy as np

__all__ = ["Mesh", "BoundaryConfig", "DofMap", "build_mesh", "classify_boundary", "export_mesh"]

SIDES = ("bottom", "right", "top", "left")


@dataclass(frozen=True)
class Mesh:
    """Structured right-triangle mesh of [0, 1]^2 with ``(2**level + 1)**2`` nodes.

    Node ``(i, j)`` at ``(i*h, j*h)`` has id ``j*(N+1) + i``.  Every cell is
    split along its bottom-left to top-right diagonal.  ``edge_sides`` holds
    an index into :data:`SIDES` for each boundary edge.
    """

    level: int
    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_sides: np.ndarray

    @property
    def h(self):
        return 2.0 ** -self.level

    @property
    def cells_per_side(self):
        return 2 ** self.level

    @property
    def num_nodes(self):
        return self.nodes.shape[0]

    def signed_areas(self):
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def side_nodes(self, side):
        """Node ids on one side of the square, ordered counterclockwise."""
        N = self.cells_per_side
        ids = np.arange(N + 1)
        if side == "bottom":
            return ids
        if side == "right":
            return ids * (N + 1) + N
        if side == "top":
            return N * (N + 1) + ids[::-1]
        if side == "left":
            return ids[::-1] * (N + 1)
        raise ValueError(f"unknown side {side!r}")


def build_mesh(level):
    level = int(level)
    if level < 1:
        raise ValueError(f"refinement level must be >= 1, got {level}")
    N = 2 ** level
    h = 1.0 / N
    i, j = np.meshgrid(np.arange(N + 1), np.arange(N + 1))
    nodes = np.column_stack([i.ravel() * h, j.ravel() * h])

    ci, cj = np.meshgrid(np.arange(N), np.arange(N))
    ci, cj = ci.ravel(), cj.ravel()
    a = cj * (N + 1) + ci
    b = a + 1
    c = a + N + 2
    d = a + N + 1
    triangles = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])

    edges, sides = [], []
    mesh = Mesh(level, nodes, triangles, np.empty((0, 2), dtype=np.int64), np.empty(0, dtype=np.int64))
    for s, side in enumerate(SIDES):
        ids = mesh.side_nodes(side)
        edges.append(np.column_stack([ids[:-1], ids[1:]]))
        sides.append(np.full(N, s))
    return Mesh(level, nodes, triangles, np.concatenate(edges), np.concatenate(sides))


class BoundaryConfig(enum.Enum):
    """The three Neumann (control) boundary configurations."""

    GAMMA1 = 1
    GAMMA2 = 2
    GAMMA3 = 3

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(int(str(value).lower().removeprefix("gamma")))
        except ValueError:
            raise ValueError(f"invalid boundary configuration {value!r}; valid values are 1, 2, 3") from None

    def contains(self, x, y):
        """Whether boundary points (x, y) belong to the control boundary."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self is BoundaryConfig.GAMMA1:
            return np.isclose(y, 1.0)
        if self is BoundaryConfig.GAMMA2:
            return np.isclose(y, 1.0) | np.isclose(x, 1.0)
        return ~((x < 0.5) & (y < 0.5))


@dataclass(frozen=True)
class DofMap:
    """Free-node numbering with interior nodes first and control-boundary nodes last.

    ``free_nodes[k]`` is the mesh node id of system index ``k``;
    ``permutation[node]`` is the inverse map, -1 on Dirichlet nodes.  The
    control basis is the trace of the state basis, so ``control_nodes`` equals
    ``gamma_nodes``.
    """

    config: BoundaryConfig
    free_nodes: np.ndarray
    interior_count: int
    gamma_nodes: np.ndarray
    dirichlet_nodes: np.ndarray
    permutation: np.ndarray
    gamma_edges: np.ndarray
    dirichlet_edges: np.ndarray

    @property
    def n(self):
        return self.free_nodes.size

    @property
    def n_I(self):
        return self.interior_count

    @property
    def n_B(self):
        return self.gamma_nodes.size

    @property
    def m_B(self):
        return self.control_nodes.size

    @property
    def control_nodes(self):
        return self.gamma_nodes

    @property
    def total_dof(self):
        return 2 * self.n + self.m_B


def _perimeter_coordinate(points):
    # counterclockwise arclength from (0, 0)
    x, y = points[:, 0], points[:, 1]
    s = np.where(np.isclose(y, 0.0), x, np.nan)
    s = np.where(np.isnan(s) & np.isclose(x, 1.0), 1.0 + y, s)
    s = np.where(np.isnan(s) & np.isclose(y, 1.0), 3.0 - x, s)
    s = np.where(np.isnan(s) & np.isclose(x, 0.0), 4.0 - y, s)
    return s


def classify_boundary(mesh, config):
    config = BoundaryConfig.parse(config)
    mid = mesh.nodes[mesh.boundary_edges].mean(axis=1)
    on_gamma = config.contains(mid[:, 0], mid[:, 1])
    gamma_edges = mesh.boundary_edges[on_gamma]
    dirichlet_edges = mesh.boundary_edges[~on_gamma]

    # junction corners go to the Dirichlet set
    dirichlet = np.unique(dirichlet_edges)
    gamma = np.setdiff1d(np.unique(gamma_edges), dirichlet)
    fixed = np.zeros(mesh.num_nodes, dtype=bool)
    fixed[dirichlet] = True
    fixed[gamma] = True
    interior = np.flatnonzero(~fixed)

    # Gamma nodes ordered along the boundary chain
    s = _perimeter_coordinate(mesh.nodes[gamma])
    gamma = gamma[np.argsort(s, kind="stable")]

    free = np.concatenate([interior, gamma])
    perm = np.full(mesh.num_nodes, -1, dtype=np.int64)
    perm[free] = np.arange(free.size)
    return DofMap(
        config=config,
        free_nodes=free,
        interior_count=interior.size,
        gamma_nodes=gamma,
        dirichlet_nodes=dirichlet,
        permutation=perm,
        gamma_edges=gamma_edges,
        dirichlet_edges=dirichlet_edges,
    )


def gamma_arclength(mesh, dofmap, nodes=None):
    """Arclength along the control boundary, measured from its start point."""
    nodes = dofmap.gamma_nodes if nodes is None else nodes
    start = {BoundaryConfig.GAMMA1: 2.0, BoundaryConfig.GAMMA2: 1.0, BoundaryConfig.GAMMA3: 0.5}
    return _perimeter_coordinate(mesh.nodes[nodes]) - start[dofmap.config]


def export_mesh(mesh, node_path, element_path):
    """Plain-text node and element lists ("x y" and "i j k", 0-based)."""
    with open(node_path, "w") as fh:
        for x, y in mesh.nodes:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
    with open(element_path, "w") as fh:
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")
