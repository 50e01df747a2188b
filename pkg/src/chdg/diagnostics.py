"""Scalar functionals, error norms, convergence rates, CSV and VTK output."""

from dataclasses import dataclass

import numpy as np

from .assembly import CellTab
from .spaces import DGSpace, Field, HdivSpace

CSV_HEADER = ("step,t,dt,accepted,eps,mass,energy,dissipation,"
              "newton_iters,gmres_iters_total,wall_seconds")


@dataclass
class StepRecord:
    step: int
    t: float
    dt: float
    accepted: bool
    eps: float
    mass: float
    energy: float
    dissipation: float
    newton_iters: int
    gmres_iters_total: int
    wall_seconds: float


def total_mass(field, tab=None):
    """Integral of a DG field over the domain."""
    space = field.space
    if tab is None:
        tab = CellTab(space.mesh)
    vals = tab.evaluate_dg(space, field.vec)
    return float(np.sum(tab.wdet * vals))


def l2_error(field, exact, tab=None):
    """L2 distance between a discrete field and an analytic function.

    `exact(pts) -> values` (scalar spaces) or `-> (..., 2)` (vector spaces).
    """
    space = field.space
    if tab is None:
        tab = CellTab(space.mesh)
    if isinstance(space, DGSpace):
        vals = tab.evaluate_dg(space, field.vec)
        ex = exact(tab.phys.reshape(-1, 2)).reshape(vals.shape)
        return float(np.sqrt(np.sum(tab.wdet * (vals - ex) ** 2)))
    if isinstance(space, HdivSpace):
        bas, _ = tab.rt_basis(space)
        coeffs = field.vec[space.cell_dofs]
        vals = np.einsum("cqjx,cj->cqx", bas, coeffs)
        ex = exact(tab.phys.reshape(-1, 2)).reshape(vals.shape)
        diff2 = np.sum((vals - ex) ** 2, axis=-1)
        return float(np.sqrt(np.sum(tab.wdet * diff2)))
    raise TypeError("unsupported space")


def convergence_rates(errors, h):
    """Observed orders log(e_i/e_{i+1}) / log(h_i/h_{i+1})."""
    errors = np.asarray(errors, dtype=float)
    h = np.asarray(h, dtype=float)
    return list(np.log(errors[:-1] / errors[1:]) / np.log(h[:-1] / h[1:]))


# ---------------------------------------------------------------------------
# writers
# ---------------------------------------------------------------------------

def _fmt(x):
    return format(float(x), ".17g")


def write_timeseries(records, path):
    """Write step records as CSV (17 significant digits, round-trip safe)."""
    with open(path, "w") as f:
        f.write(CSV_HEADER + "\n")
        for r in records:
            f.write(",".join([
                str(r.step), _fmt(r.t), _fmt(r.dt), str(int(r.accepted)),
                _fmt(r.eps), _fmt(r.mass), _fmt(r.energy),
                _fmt(r.dissipation), str(r.newton_iters),
                str(r.gmres_iters_total), _fmt(r.wall_seconds)]) + "\n")


def read_timeseries(path):
    """Parse a CSV written by write_timeseries back into StepRecord objects."""
    records = []
    with open(path) as f:
        header = f.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header: {header!r}")
        for line in f:
            parts = line.strip().split(",")
            records.append(StepRecord(
                step=int(parts[0]), t=float(parts[1]), dt=float(parts[2]),
                accepted=bool(int(parts[3])), eps=float(parts[4]),
                mass=float(parts[5]), energy=float(parts[6]),
                dissipation=float(parts[7]), newton_iters=int(parts[8]),
                gmres_iters_total=int(parts[9]),
                wall_seconds=float(parts[10])))
    return records


def write_field_vtk(path, mesh, point_fields=None, cell_fields=None):
    """Write fields on a quad mesh as a legacy-VTK unstructured grid.

    `point_fields`: dict name -> DG Field, written as scalars at the four
    cell corners (points are duplicated per cell, as appropriate for
    discontinuous data).  `cell_fields`: dict name -> H(div) Field, written
    as cell-averaged vectors.
    """
    point_fields = point_fields or {}
    cell_fields = cell_fields or {}
    corners = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    cells = np.arange(mesh.ncells)
    pts, _, _ = mesh.geometry_batch(cells, corners)   # (nc, 4, 2)
    npts = mesh.ncells * 4
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\nchdg fields\nASCII\n")
        f.write("DATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {npts} double\n")
        for c in range(mesh.ncells):
            for k in range(4):
                f.write(f"{pts[c, k, 0]:.17g} {pts[c, k, 1]:.17g} 0\n")
        f.write(f"CELLS {mesh.ncells} {mesh.ncells * 5}\n")
        for c in range(mesh.ncells):
            base = 4 * c
            f.write(f"4 {base} {base + 1} {base + 2} {base + 3}\n")
        f.write(f"CELL_TYPES {mesh.ncells}\n")
        f.write("9\n" * mesh.ncells)
        if point_fields:
            f.write(f"POINT_DATA {npts}\n")
            for name, fld in point_fields.items():
                vals, _ = fld.space.tabulate(corners)
                coeffs = fld.vec.reshape(mesh.ncells, fld.space.ndof_cell)
                corner_vals = coeffs @ vals.T            # (nc, 4)
                f.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for v in corner_vals.ravel():
                    f.write(f"{v:.17g}\n")
        if cell_fields:
            f.write(f"CELL_DATA {mesh.ncells}\n")
            tab = CellTab(mesh)
            areas = tab.wdet.sum(axis=1)
            for name, fld in cell_fields.items():
                bas, _ = tab.rt_basis(fld.space)
                coeffs = fld.vec[fld.space.cell_dofs]
                vals = np.einsum("cqjx,cj->cqx", bas, coeffs)
                avg = np.einsum("cq,cqx->cx", tab.wdet, vals) / areas[:, None]
                f.write(f"VECTORS {name} double\n")
                for c in range(mesh.ncells):
                    f.write(f"{avg[c, 0]:.17g} {avg[c, 1]:.17g} 0\n")
