import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bcprecond.mesh import BoundaryConfig, build_mesh, classify_boundary, export_mesh, gamma_arclength


def test_level1_counts():
    mesh = build_mesh(1)
    assert mesh.num_nodes == 9
    assert mesh.triangles.shape == (8, 3)
    assert mesh.boundary_edges.shape == (8, 2)
    assert mesh.h == 0.5


def test_invalid_level():
    with pytest.raises(ValueError):
        build_mesh(0)


@given(st.integers(1, 6))
@settings(max_examples=6, deadline=None)
def test_mesh_invariants(level):
    mesh = build_mesh(level)
    N = 2 ** level
    assert mesh.num_nodes == (N + 1) ** 2
    assert mesh.triangles.shape[0] == 2 * N * N
    areas = mesh.signed_areas()
    # counterclockwise and uniform
    np.testing.assert_allclose(areas, 0.5 * mesh.h ** 2, rtol=1e-12)
    assert abs(areas.sum() - 1.0) < 1e-12
    assert mesh.boundary_edges.shape[0] == 4 * N
    # every interior edge is shared by two triangles, boundary edges by one
    edges = np.sort(np.concatenate([mesh.triangles[:, [0, 1]], mesh.triangles[:, [1, 2]], mesh.triangles[:, [2, 0]]]), axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    assert set(counts) <= {1, 2}
    assert (counts == 1).sum() == 4 * N


def test_diagonal_direction():
    mesh = build_mesh(1)
    # lower triangles come first; the partner of cell 0 sits at index N*N
    # and the diagonal they share runs from (0,0) to (h,h)
    tri = mesh.triangles[0]
    pts = mesh.nodes[tri]
    shared = {tuple(map(float, p)) for p in pts} & {tuple(map(float, p)) for p in mesh.nodes[mesh.triangles[4]]}
    assert shared == {(0.0, 0.0), (0.5, 0.5)}


@pytest.mark.parametrize("gamma, m_B", [(1, 3), (2, 7), (3, 11)])
def test_level2_gamma_sizes(gamma, m_B):
    dm = classify_boundary(build_mesh(2), gamma)
    assert dm.m_B == m_B
    assert dm.n_I == 9
    assert dm.n == 9 + m_B
    assert dm.total_dof == 2 * dm.n + dm.m_B


@pytest.mark.parametrize("gamma", [1, 2, 3])
def test_partition_and_ordering(gamma):
    mesh = build_mesh(4)
    dm = classify_boundary(mesh, gamma)
    everything = np.concatenate([dm.free_nodes, dm.dirichlet_nodes])
    assert np.array_equal(np.sort(everything), np.arange(mesh.num_nodes))
    assert np.array_equal(dm.free_nodes[dm.n_I:], dm.gamma_nodes)
    assert np.all(dm.permutation[dm.free_nodes] == np.arange(dm.n))
    assert np.all(dm.permutation[dm.dirichlet_nodes] == -1)
    # Gamma nodes form a chain with spacing h
    pts = mesh.nodes[dm.gamma_nodes]
    steps = np.abs(np.diff(pts, axis=0)).sum(axis=1)
    np.testing.assert_allclose(steps, mesh.h, rtol=1e-12)
    s = gamma_arclength(mesh, dm)
    assert np.all(np.diff(s) > 0)
    assert s[0] == pytest.approx(mesh.h)


def test_gamma3_edge_fraction():
    mesh = build_mesh(5)
    dm = classify_boundary(mesh, 3)
    assert len(dm.gamma_edges) * 4 == 3 * len(mesh.boundary_edges)


def test_gamma_membership_examples():
    g1, g2, g3 = BoundaryConfig.GAMMA1, BoundaryConfig.GAMMA2, BoundaryConfig.GAMMA3
    assert g1.contains(np.array([0.3]), np.array([1.0]))[0]
    assert not g1.contains(np.array([1.0]), np.array([0.3]))[0]
    assert g2.contains(np.array([1.0]), np.array([0.3]))[0]
    assert g3.contains(np.array([0.7]), np.array([0.0]))[0]
    assert not g3.contains(np.array([0.2]), np.array([0.0]))[0]
    assert not g3.contains(np.array([0.0]), np.array([0.2]))[0]


def test_junction_corners_dirichlet():
    mesh = build_mesh(3)
    dm = classify_boundary(mesh, 1)
    corners = {tuple(mesh.nodes[i]) for i in dm.dirichlet_nodes}
    assert (0.0, 1.0) in corners and (1.0, 1.0) in corners


def test_parse_rejects_unknown():
    with pytest.raises(ValueError, match="valid values are 1, 2, 3"):
        BoundaryConfig.parse(4)
    assert BoundaryConfig.parse("2") is BoundaryConfig.GAMMA2


def test_export_mesh(tmp_path):
    mesh = build_mesh(2)
    export_mesh(mesh, tmp_path / "n.txt", tmp_path / "e.txt")
    nodes = np.loadtxt(tmp_path / "n.txt")
    elems = np.loadtxt(tmp_path / "e.txt", dtype=int)
    np.testing.assert_array_equal(nodes, mesh.nodes)
    np.testing.assert_array_equal(elems, mesh.triangles)
