import numpy as np
import pytest

from chdg.mesh import (GeometryError, LOCAL_EDGE_CORNERS, MeshError,
                       build_structured, perturb, ref_edge_points)
from chdg.quadrature import gauss_legendre_1d, tensor_gauss


def test_single_cell_counts():
    m = build_structured(1, 1, 1.0, 1.0, False, False)
    assert m.ncells == 1
    assert len(m.vertices) == 4
    assert len(m.boundary_edges) == 4
    assert len(m.interior_edges) == 0


def test_periodic_2x1_topology():
    # both vertical edge classes become interior under periodic identification
    m = build_structured(2, 1, 1.0, 1.0, True, False)
    assert m.ncells == 2
    assert len(m.interior_edges) == 2
    assert len(m.boundary_edges) == 4


def test_fully_periodic_64x32():
    m = build_structured(64, 32, 2.0, 1.0, True, True)
    assert m.ncells == 2048
    assert len(m.boundary_edges) == 0
    assert len(m.interior_edges) == m.nedges


@pytest.mark.parametrize("args", [(0, 4, 1, 1), (4, -1, 1, 1),
                                  (4, 4, 0.0, 1), (4, 4, 1, -2.0)])
def test_invalid_arguments(args):
    with pytest.raises(MeshError):
        build_structured(*args, False, False)


def test_geometry_unit_cell():
    m = build_structured(1, 1, 1.0, 1.0, False, False)
    phys, J, det = m.geometry(0, np.array([[0.0, 0.0]]))
    assert np.allclose(phys[0], [0.5, 0.5])
    assert abs(det[0] - 0.25) < 1e-15


def test_geometry_regular_16():
    m = build_structured(16, 16, 1.0, 1.0, True, True)
    pts, _ = tensor_gauss(3)
    _, _, det = m.geometry_batch(np.arange(m.ncells), pts)
    assert np.abs(det - 1.0 / 1024.0).max() < 1e-15


def test_geometry_out_of_range():
    m = build_structured(2, 2, 1.0, 1.0, False, False)
    with pytest.raises(IndexError):
        m.geometry(4, np.zeros((1, 2)))


def test_geometry_fd_oracle_perturbed_cell():
    # bilinear map on the quad (0,0),(1,0),(1,1),(0,1.2): finite-difference
    # Jacobian agrees with the analytic one
    m = build_structured(1, 1, 1.0, 1.0, False, False)
    m.cell_coords[0] = np.array([[0, 0], [1, 0], [1, 1], [0, 1.2]], float)
    p0 = np.array([[0.0, 0.0]])
    _, J, det = m.geometry(0, p0)
    h = 1e-6
    Jfd = np.zeros((2, 2))
    for d in range(2):
        pp = p0.copy()
        pp[0, d] += h
        pm = p0.copy()
        pm[0, d] -= h
        fp, _, _ = m.geometry(0, pp)
        fm, _, _ = m.geometry(0, pm)
        Jfd[:, d] = (fp[0] - fm[0]) / (2 * h)
    assert np.abs(J[0] - Jfd).max() < 1e-9
    detfd = Jfd[0, 0] * Jfd[1, 1] - Jfd[0, 1] * Jfd[1, 0]
    assert abs(det[0] - detfd) < 1e-10


class TestPerturb:
    def test_zero_factor_identity(self):
        m = build_structured(5, 5, 1.0, 1.0, True, True)
        mp = perturb(m, 0.0, 7)
        assert np.array_equal(m.vertices, mp.vertices)

    def test_deterministic(self):
        m = build_structured(20, 20, 1.0, 1.0, True, True)
        a = perturb(m, 0.06, 42)
        b = perturb(m, 0.06, 42)
        assert np.array_equal(a.vertices, b.vertices)
        assert np.array_equal(a.cell_coords, b.cell_coords)

    def test_displacement_bound(self):
        m = build_structured(20, 20, 1.0, 1.0, True, True)
        mp = perturb(m, 0.06, 3)
        disp = np.abs(mp.vertices - m.vertices)
        assert disp.max() <= 0.06 / 20 + 1e-15
        assert disp.max() > 0.0

    def test_boundary_vertices_fixed(self):
        m = build_structured(6, 6, 1.0, 1.0, True, False)
        mp = perturb(m, 0.06, 3)
        moved = np.abs(mp.vertices - m.vertices).sum(axis=1) > 0
        x, y = m.vertices[:, 0], m.vertices[:, 1]
        on_seam_or_bdry = (x == 0.0) | (y == 0.0) | (y == 1.0)
        assert not np.any(moved & on_seam_or_bdry)

    def test_topology_unchanged(self):
        m = build_structured(6, 4, 1.0, 1.0, True, False)
        mp = perturb(m, 0.06, 5)
        assert np.array_equal(m.cells, mp.cells)
        assert np.array_equal(m.edge_cells, mp.edge_cells)
        assert np.array_equal(m.edge_local, mp.edge_local)

    def test_folding_raises(self):
        m = build_structured(4, 4, 1.0, 1.0, True, True)
        with pytest.raises(GeometryError):
            perturb(m, 5.0, 0)

    def test_negative_factor(self):
        m = build_structured(4, 4, 1.0, 1.0, True, True)
        with pytest.raises(MeshError):
            perturb(m, -0.1, 0)


@pytest.mark.parametrize("factor", [0.0, 0.06])
def test_area_sum(factor):
    m = build_structured(12, 9, 2.0, 1.5, True, True)
    if factor:
        m = perturb(m, factor, 11)
    assert abs(m.cell_areas().sum() - 3.0) <= 1e-12 * 3.0


def test_interior_edge_normal_consistency():
    m = perturb(build_structured(6, 6, 1.0, 1.0, True, True), 0.06, 9)
    s, _ = gauss_legendre_1d(3)
    normals = m.edge_normals()
    for e in m.interior_edges:
        for side, sign in ((0, 1.0), (1, -1.0)):
            c = m.edge_cells[e, side]
            l = m.edge_local[e, side]
            a = m.cell_coords[c, LOCAL_EDGE_CORNERS[l][0]]
            b = m.cell_coords[c, LOCAL_EDGE_CORNERS[l][1]]
            t = (b - a) / np.linalg.norm(b - a)
            n_out = np.array([t[1], -t[0]])     # outward for ccw traversal
            assert np.abs(sign * normals[e] - n_out).max() < 1e-13


def test_edge_quadrature_points_match_across_sides():
    # matched global parametrization: both sides see identical physical
    # points (up to a period offset on seam edges)
    m = perturb(build_structured(5, 5, 1.0, 1.0, True, True), 0.06, 2)
    s, _ = gauss_legendre_1d(4)
    for e in m.interior_edges:
        pts = []
        for side in (0, 1):
            c = m.edge_cells[e, side]
            l, f = m.edge_local[e, side], m.edge_flip[e, side]
            phys, _, _ = m.geometry(c, ref_edge_points(l, f * s))
            pts.append(phys)
        diff = pts[0] - pts[1]
        # per-coordinate offset must be constant (0 or one period)
        assert np.abs(diff - diff[0]).max() < 1e-13
        for d, L in ((0, 1.0), (1, 1.0)):
            assert min(abs(diff[0, d]), abs(abs(diff[0, d]) - L)) < 1e-13
