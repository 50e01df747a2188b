import numpy as np
import pytest

from chdg.assembly import CellTab, assemble_div, assemble_mass
from chdg.mesh import build_structured, perturb, ref_edge_points
from chdg.quadrature import gauss_legendre_1d, legendre_val
from chdg.spaces import (DGSpace, HdivSpace, interpolate, reference_rt,
                         zero_boundary_vector)


class TestDG:
    def test_nodal_property(self, mesh8):
        dg = DGSpace(mesh8, 1)
        v, _ = dg.tabulate(np.array([[-1.0, -1.0]]))
        assert np.allclose(v[0], [1, 0, 0, 0])

    def test_partition_of_unity(self, mesh8, rng):
        dg = DGSpace(mesh8, 1)
        pts = rng.uniform(-1, 1, (7, 2))
        v, _ = dg.tabulate(pts)
        assert np.abs(v.sum(axis=1) - 1.0).max() < 1e-14

    def test_linear_reproduction_gradient(self):
        m = build_structured(1, 1, 1.0, 1.0, False, False)
        dg = DGSpace(m, 1)
        f = interpolate(dg, lambda p: p[:, 0])
        pts = np.random.default_rng(0).uniform(-1, 1, (5, 2))
        _, rgrads = dg.tabulate(pts)
        _, J, _ = m.geometry(0, pts)
        Jinv = np.linalg.inv(J)
        pgrads = np.einsum("qdx,qjd->qjx", Jinv, rgrads)
        g = np.einsum("qjx,j->qx", pgrads, f.vec)
        assert np.abs(g - [1.0, 0.0]).max() < 1e-13


class TestReferenceRT:
    def test_dimensions(self, mesh8):
        hdiv = HdivSpace(mesh8, 2)
        assert hdiv.ndof_cell == 12            # 8 edge + 4 interior
        assert hdiv.n_int_cell == 4
        hdiv1 = HdivSpace(mesh8, 1)
        assert hdiv1.ndof_cell == 4

    @pytest.mark.parametrize("k", [1, 2])
    def test_unisolvence(self, k):
        ref = reference_rt(k)
        eye = ref.dof_matrix @ ref.coeffs
        assert np.abs(eye - np.eye(ref.ndof)).max() < 1e-12

    def test_edge_dof_duality(self):
        # basis dual to an edge dof has vanishing normal moments on the
        # other three edges
        ref = reference_rt(2)
        s, ws = gauss_legendre_1d(4)
        from chdg.mesh import REF_EDGE_NORMALS
        basis0 = ref.coeffs[:, 0]              # dual to (edge 0, moment 0)
        from chdg.spaces import _eval_monomials
        for edge in range(1, 4):
            pts = ref_edge_points(edge, s)
            vals, _ = _eval_monomials(ref.monos, pts)
            vn = (vals @ REF_EDGE_NORMALS[edge]) @ basis0
            for mdeg in range(2):
                mom = np.einsum("q,q,q->", ws, vn, legendre_val(mdeg, s))
                assert abs(mom) < 1e-13


class TestPiola:
    def test_normal_trace_continuity_perturbed(self):
        m = perturb(build_structured(4, 4, 1.0, 1.0, True, True), 0.06, 3)
        hdiv = HdivSpace(m, 2)
        s, _ = gauss_legendre_1d(4)
        normals = m.edge_normals()
        for e in m.interior_edges:
            traces = {}
            for side in (0, 1):
                c = m.edge_cells[e, side]
                l, f = m.edge_local[e, side], m.edge_flip[e, side]
                vals, _ = hdiv.tabulate(c, ref_edge_points(l, f * s))
                for loc, g in enumerate(hdiv.cell_dofs[c]):
                    traces.setdefault(g, []).append(vals[:, loc] @ normals[e])
            for g, tr in traces.items():
                if len(tr) == 2:
                    assert np.abs(tr[0] - tr[1]).max() < 1e-12

    def test_divergence_of_linear_interpolant(self):
        # v = (x, 0) has divergence identically 1
        m = build_structured(1, 1, 1.0, 1.0, False, False)
        dg, hdiv = DGSpace(m, 1), HdivSpace(m, 2)
        v = interpolate(hdiv, lambda p: np.column_stack(
            [p[:, 0], np.zeros(len(p))]))
        D = assemble_div(hdiv, dg)
        M = assemble_mass(dg)
        import scipy.sparse.linalg as spla
        proj = spla.spsolve(M.tocsc(), D @ v.vec)
        assert np.abs(proj - 1.0).max() < 1e-12


class TestInterpolation:
    def test_constant(self, mesh8):
        dg = DGSpace(mesh8, 1)
        f = interpolate(dg, lambda p: np.ones(len(p)))
        assert np.abs(f.vec - 1.0).max() < 1e-14

    def test_interpolation_order(self):
        from chdg.diagnostics import l2_error
        errs = []
        fn = lambda p: np.sin(2 * np.pi * p[:, 0]) * np.sin(4 * np.pi * p[:, 1])
        for nx in (32, 64):
            m = build_structured(nx, nx, 1.0, 1.0, True, True)
            dg = DGSpace(m, 1)
            errs.append(l2_error(interpolate(dg, fn), fn))
        assert errs[1] < errs[0] / 3.5          # second-order interpolation

    def test_divergence_free_exactness(self):
        m = build_structured(16, 16, 1.0, 1.0, True, True)
        dg, hdiv = DGSpace(m, 1), HdivSpace(m, 2)
        c = 2 * np.pi

        def fn(p):
            return np.column_stack([
                -c * np.sin(c * p[:, 0]) * np.cos(c * p[:, 1]),
                c * np.cos(c * p[:, 0]) * np.sin(c * p[:, 1])])
        v = interpolate(hdiv, fn, quad_order=8)
        D = assemble_div(hdiv, dg)
        assert np.abs(D @ v.vec).max() < 1e-10


class TestComplexProperty:
    def test_div_lands_in_dg_pointwise(self, rng):
        # on an unperturbed mesh the divergence of any H(div) function is
        # exactly representable in the DG space
        m = build_structured(6, 6, 1.0, 1.0, True, True)
        dg, hdiv = DGSpace(m, 1), HdivSpace(m, 2)
        D = assemble_div(hdiv, dg)
        M = assemble_mass(dg)
        import scipy.sparse.linalg as spla
        c = rng.standard_normal(hdiv.ndofs)
        q = spla.spsolve(M.tocsc(), D @ c)      # dQ representation of div v
        tab = CellTab(m)
        _, divs = hdiv.tabulate_batch(np.arange(m.ncells), tab.qp)
        div_pt = np.einsum("cqj,cj->cq", divs, c[hdiv.cell_dofs])
        q_pt = tab.evaluate_dg(dg, q)
        scale = np.abs(div_pt).max()
        assert np.abs(div_pt - q_pt).max() < 1e-12 * scale


class TestBoundary:
    def test_fully_periodic_no_dofs(self, mesh8):
        hdiv = HdivSpace(mesh8, 2)
        assert len(hdiv.boundary_dofs) == 0
        v = np.ones(hdiv.ndofs)
        assert np.array_equal(zero_boundary_vector(hdiv, v), v)

    def test_shear_wall_dofs(self):
        # periodic in x only: every dof on the y=0 and y=1 edges constrained
        m = build_structured(8, 8, 1.0, 1.0, True, False)
        hdiv = HdivSpace(m, 2)
        assert len(m.boundary_edges) == 2 * 8
        assert len(hdiv.boundary_dofs) == 2 * 8 * 2

    def test_constrained_interpolant_zero_normal_trace(self):
        m = build_structured(4, 4, 1.0, 1.0, True, False)
        hdiv = HdivSpace(m, 2)
        v = interpolate(hdiv, lambda p: np.column_stack(
            [np.zeros(len(p)), np.ones(len(p))]))
        vec = zero_boundary_vector(hdiv, v.vec)
        s, ws = gauss_legendre_1d(4)
        normals = m.edge_normals()
        for e in m.boundary_edges:
            c = m.edge_cells[e, 0]
            l, f = m.edge_local[e, 0], m.edge_flip[e, 0]
            vals, _ = hdiv.tabulate(c, ref_edge_points(l, f * s))
            tr = np.einsum("qjx,j,x->q", vals, vec[hdiv.cell_dofs[c]],
                           normals[e])
            assert np.abs(tr).max() < 1e-13
