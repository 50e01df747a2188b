import numpy as np
import pytest

from chdg.diagnostics import (CSV_HEADER, StepRecord, convergence_rates,
                              l2_error, read_timeseries, total_mass,
                              write_field_vtk, write_timeseries)
from chdg.mesh import build_structured
from chdg.spaces import DGSpace, Field, HdivSpace, interpolate


class TestTotalMass:
    def test_unit_constant(self, mesh8):
        dg = DGSpace(mesh8, 1)
        assert abs(total_mass(Field(dg, np.ones(dg.ndofs))) - 1.0) < 1e-14

    def test_rectangle(self):
        m = build_structured(8, 4, 2.0, 1.0, True, True)
        dg = DGSpace(m, 1)
        assert abs(total_mass(Field(dg, np.ones(dg.ndofs))) - 2.0) < 1e-14

    def test_linearity(self, mesh8, rng):
        dg = DGSpace(mesh8, 1)
        v = rng.standard_normal(dg.ndofs)
        m1 = total_mass(Field(dg, v))
        m3 = total_mass(Field(dg, 3.0 * v))
        assert abs(m3 - 3.0 * m1) <= 1e-14 * max(1.0, abs(m1))


class TestL2Error:
    def test_self_zero(self, mesh8):
        dg = DGSpace(mesh8, 1)
        fn = lambda p: p[:, 0] + 2 * p[:, 1]
        f = interpolate(dg, fn)
        assert l2_error(f, fn) < 1e-14

    def test_interpolation_ratio(self):
        fn = lambda p: np.sin(2 * np.pi * p[:, 0]) * \
            np.sin(4 * np.pi * p[:, 1])
        errs = []
        for nx in (16, 32):
            m = build_structured(nx, nx, 1.0, 1.0, True, True)
            errs.append(l2_error(interpolate(DGSpace(m, 1), fn), fn))
        assert 3.4 < errs[0] / errs[1] < 4.6

    def test_constant_shift_invariance(self, mesh8, rng):
        dg = DGSpace(mesh8, 1)
        fn = lambda p: np.sin(2 * np.pi * p[:, 0])
        f = interpolate(dg, fn)
        e0 = l2_error(f, fn)
        g = Field(dg, f.vec + 5.0)
        e1 = l2_error(g, lambda p: fn(p) + 5.0)
        assert abs(e0 - e1) < 1e-13

    def test_vector_field(self, mesh8):
        hdiv = HdivSpace(mesh8, 2)
        fn = lambda p: np.column_stack([p[:, 1], -p[:, 0]])
        v = interpolate(hdiv, fn)
        assert l2_error(v, fn) < 1e-12


class TestQuadratureAdequacy:
    def test_l2_error_stable_under_refinement(self):
        # the default rule and a one-order-refined rule agree to < 1%
        from chdg.assembly import CellTab
        m = build_structured(16, 16, 1.0, 1.0, True, True)
        dg = DGSpace(m, 1)
        fn = lambda p: np.sin(2 * np.pi * p[:, 0]) * \
            np.sin(4 * np.pi * p[:, 1])
        f = interpolate(dg, fn)
        e4 = l2_error(f, fn, tab=CellTab(m, 4))
        e5 = l2_error(f, fn, tab=CellTab(m, 5))
        assert abs(e4 - e5) < 0.01 * e5


class TestRates:
    def test_order_two(self):
        assert abs(convergence_rates([1.0, 0.25], [1.0, 0.5])[0] - 2.0) \
            < 1e-14

    def test_order_one(self):
        assert abs(convergence_rates([1.0, 0.5], [1.0, 0.5])[0] - 1.0) \
            < 1e-14


class TestCSV:
    def rec(self, i):
        return StepRecord(step=i, t=0.1 * i, dt=1e-3 / (i + 1),
                          accepted=i % 2 == 0, eps=0.3 + i,
                          mass=1 / 3 + i, energy=np.pi * i,
                          dissipation=1e-7 * i, newton_iters=2 * i,
                          gmres_iters_total=50 * i, wall_seconds=0.01 * i)

    def test_empty(self, tmp_path):
        path = tmp_path / "ts.csv"
        write_timeseries([], path)
        assert path.read_text() == CSV_HEADER + "\n"

    def test_round_trip(self, tmp_path):
        path = tmp_path / "ts.csv"
        records = [self.rec(i) for i in range(5)]
        write_timeseries(records, path)
        back = read_timeseries(path)
        assert len(back) == 5
        for a, b in zip(records, back):
            for fld in ("step", "t", "dt", "accepted", "eps", "mass",
                        "energy", "dissipation", "newton_iters",
                        "gmres_iters_total", "wall_seconds"):
                assert getattr(a, fld) == getattr(b, fld)

    def test_reader_rejects_bad_header(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b,c\n")
        with pytest.raises(ValueError):
            read_timeseries(p)


class TestVTK:
    def test_constant_field_round_trip(self, tmp_path):
        m = build_structured(3, 2, 1.0, 1.0, False, False)
        dg = DGSpace(m, 1)
        hdiv = HdivSpace(m, 2)
        path = tmp_path / "f.vtk"
        write_field_vtk(path, m,
                        point_fields={"phi": Field(dg, np.ones(dg.ndofs))},
                        cell_fields={"flux": Field(hdiv,
                                                   np.zeros(hdiv.ndofs))})
        text = path.read_text().splitlines()
        assert text[0].startswith("# vtk DataFile")
        npts = m.ncells * 4
        ipts = text.index(f"POINTS {npts} double")
        isc = text.index("SCALARS phi double 1")
        vals = [float(v) for v in text[isc + 2: isc + 2 + npts]]
        assert all(v == 1.0 for v in vals)
        ivec = text.index("VECTORS flux double")
        for line in text[ivec + 1: ivec + 1 + m.ncells]:
            assert all(float(c) == 0.0 for c in line.split())

    def test_cell_connectivity(self, tmp_path):
        m = build_structured(2, 2, 1.0, 1.0, False, False)
        dg = DGSpace(m, 1)
        path = tmp_path / "g.vtk"
        write_field_vtk(path, m,
                        point_fields={"phi": Field(dg, np.ones(dg.ndofs))})
        text = path.read_text().splitlines()
        icell = text.index(f"CELLS {m.ncells} {m.ncells * 5}")
        for c in range(m.ncells):
            parts = text[icell + 1 + c].split()
            assert parts[0] == "4"
            assert [int(p) for p in parts[1:]] == [4 * c, 4 * c + 1,
                                                   4 * c + 2, 4 * c + 3]
