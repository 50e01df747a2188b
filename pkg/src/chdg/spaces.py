"""Compatible finite element pair on quadrilaterals: discontinuous Q_{k-1}
scalars and Raviart-Thomas H(div) vectors of order k, with Piola transforms,
dof maps, interpolation and boundary conditions.

The RT space of order k has, per cell, x-component in Q_{k,k-1} and
y-component in Q_{k-1,k}.  Degrees of freedom are k normal moments per edge
(against Legendre polynomials on the edge) plus k(k-1) interior moments per
component.  Edge dofs are shared between neighbouring cells; each cell stores
a +-1/-1 factor accounting for normal orientation and edge direction.
"""

import numpy as np

from .mesh import LOCAL_EDGE_CORNERS, REF_EDGE_NORMALS, ref_edge_points
from .quadrature import (gauss_legendre_1d, gauss_lobatto_points, lagrange_1d,
                         legendre_val, tensor_gauss)


class Field:
    """Coefficient vector in a finite element space."""

    def __init__(self, space, vec=None):
        self.space = space
        if vec is None:
            vec = np.zeros(space.ndofs)
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (space.ndofs,):
            raise ValueError(f"coefficient vector has shape {vec.shape}, "
                             f"expected ({space.ndofs},)")
        self.vec = vec

    def copy(self):
        return Field(self.space, self.vec.copy())


# ---------------------------------------------------------------------------
# scalar discontinuous space
# ---------------------------------------------------------------------------

class DGSpace:
    """Discontinuous tensor-Lagrange space dQ_{degree} on a quad mesh.

    Nodal points are tensor Gauss-Lobatto; dofs are cell-local, numbered
    x-fastest within each cell.
    """

    def __init__(self, mesh, degree=1):
        if degree < 0:
            raise ValueError("degree must be >= 0")
        self.mesh = mesh
        self.degree = degree
        self.nodes_1d = gauss_lobatto_points(degree + 1)
        self.ndof_cell = (degree + 1) ** 2
        self.ndofs = mesh.ncells * self.ndof_cell
        xx, yy = np.meshgrid(self.nodes_1d, self.nodes_1d, indexing="xy")
        self.ref_nodes = np.column_stack([xx.ravel(), yy.ravel()])

    def cell_dofs(self, cell):
        return np.arange(cell * self.ndof_cell, (cell + 1) * self.ndof_cell)

    def tabulate(self, ref_points):
        """Basis values and reference gradients at reference points.

        Returns (vals (npts, ndof_cell), grads (npts, ndof_cell, 2)).
        """
        pts = np.atleast_2d(np.asarray(ref_points, dtype=float))
        vx, dvx = lagrange_1d(self.nodes_1d, pts[:, 0])
        vy, dvy = lagrange_1d(self.nodes_1d, pts[:, 1])
        n1 = self.degree + 1
        vals = np.einsum("pi,pj->pji", vx, vy).reshape(len(pts), n1 * n1)
        gx = np.einsum("pi,pj->pji", dvx, vy).reshape(len(pts), n1 * n1)
        gy = np.einsum("pi,pj->pji", vx, dvy).reshape(len(pts), n1 * n1)
        return vals, np.stack([gx, gy], axis=-1)


# ---------------------------------------------------------------------------
# reference Raviart-Thomas basis
# ---------------------------------------------------------------------------

def _rt_monomials(k):
    """Monomial basis of the reference RT_k space as (component, px, py)."""
    monos = []
    for px in range(k + 1):
        for py in range(k):
            monos.append((0, px, py))
    for px in range(k):
        for py in range(k + 1):
            monos.append((1, px, py))
    return monos


def _eval_monomials(monos, pts):
    """Values (npts, nmono, 2) and divergences (npts, nmono) of RT monomials."""
    pts = np.atleast_2d(pts)
    x, y = pts[:, 0], pts[:, 1]
    vals = np.zeros((len(pts), len(monos), 2))
    divs = np.zeros((len(pts), len(monos)))
    for m, (comp, px, py) in enumerate(monos):
        vals[:, m, comp] = x ** px * y ** py
        if comp == 0 and px > 0:
            divs[:, m] = px * x ** (px - 1) * y ** py
        elif comp == 1 and py > 0:
            divs[:, m] = py * x ** px * y ** (py - 1)
    return vals, divs


class _ReferenceRT:
    """Reference RT_k basis: coefficients of the dual basis to the standard
    normal-moment (edge) and interior-moment dofs.

    Dof ordering: [edge 0..3] x [Legendre degree 0..k-1], then k(k-1)
    x-component interior moments (against Q_{k-2,k-1}), then the y-component
    ones (against Q_{k-1,k-2}).
    """

    def __init__(self, k):
        self.k = k
        self.monos = _rt_monomials(k)
        ndof = len(self.monos)
        self.ndof = ndof
        self.n_edge = 4 * k
        self.n_int = ndof - self.n_edge

        s, ws = gauss_legendre_1d(k + 2)
        pts2, w2 = tensor_gauss(k + 2)
        V = np.zeros((ndof, ndof))
        row = 0
        for edge in range(4):
            epts = ref_edge_points(edge, s)
            vals, _ = _eval_monomials(self.monos, epts)
            vn = vals @ REF_EDGE_NORMALS[edge]          # (ns, nmono)
            for m in range(k):
                pm = legendre_val(m, s)
                V[row] = np.einsum("s,sm,s->m", ws, vn, pm)
                row += 1
        vals2, _ = _eval_monomials(self.monos, pts2)
        self.int_moment_powers = ([(px, py) for px in range(k - 1) for py in range(k)],
                                  [(px, py) for px in range(k) for py in range(k - 1)])
        for comp in (0, 1):
            for (px, py) in self.int_moment_powers[comp]:
                q = pts2[:, 0] ** px * pts2[:, 1] ** py
                V[row] = np.einsum("s,sm,s->m", w2, vals2[:, :, comp], q)
                row += 1
        assert row == ndof
        self.dof_matrix = V
        self.coeffs = np.linalg.inv(V)                  # column j: basis j

    def tabulate(self, pts):
        """Reference basis values (npts, ndof, 2) and divergences (npts, ndof)."""
        mv, md = _eval_monomials(self.monos, pts)
        vals = np.einsum("smx,mj->sjx", mv, self.coeffs)
        divs = np.einsum("sm,mj->sj", md, self.coeffs)
        return vals, divs


_REFERENCE_RT_CACHE = {}


def reference_rt(k):
    if k not in _REFERENCE_RT_CACHE:
        _REFERENCE_RT_CACHE[k] = _ReferenceRT(k)
    return _REFERENCE_RT_CACHE[k]


# ---------------------------------------------------------------------------
# H(div) space
# ---------------------------------------------------------------------------

class HdivSpace:
    """Raviart-Thomas space of order k on a quad mesh (contravariant Piola)."""

    def __init__(self, mesh, order=2):
        if order < 1:
            raise ValueError("order must be >= 1")
        self.mesh = mesh
        self.order = order
        k = order
        self.ref = reference_rt(k)
        self.ndof_cell = self.ref.ndof
        self.n_int_cell = self.ref.n_int
        self.ndofs = mesh.nedges * k + mesh.ncells * self.n_int_cell
        self._build_dof_map()

    def _build_dof_map(self):
        mesh, k = self.mesh, self.order
        nc = mesh.ncells
        self.cell_dofs = np.empty((nc, self.ndof_cell), dtype=np.int64)
        self.cell_signs = np.ones((nc, self.ndof_cell))
        # gather (cell, local) -> (edge, out_sign, flip)
        per_cell = {}
        for e in range(mesh.nedges):
            for side in (0, 1):
                c = mesh.edge_cells[e, side]
                if c < 0:
                    continue
                l = mesh.edge_local[e, side]
                out = 1.0 if side == 0 else -1.0
                per_cell[(c, l)] = (e, out, float(mesh.edge_flip[e, side]))
        for c in range(nc):
            for l in range(4):
                e, out, flip = per_cell[(c, l)]
                for m in range(k):
                    self.cell_dofs[c, l * k + m] = e * k + m
                    self.cell_signs[c, l * k + m] = out * flip ** m
            base = mesh.nedges * k + c * self.n_int_cell
            self.cell_dofs[c, 4 * k:] = np.arange(base, base + self.n_int_cell)
        bdofs = []
        for e in mesh.boundary_edges:
            bdofs.extend(range(e * k, e * k + k))
        self.boundary_dofs = np.array(sorted(bdofs), dtype=np.int64)

    def tabulate(self, cell, ref_points):
        """Physical basis values and divergences for one cell (signs applied).

        Returns (vals (npts, ndof_cell, 2), divs (npts, ndof_cell)).
        """
        vals, divs = self.tabulate_batch(np.array([cell]), ref_points)
        return vals[0], divs[0]

    def tabulate_batch(self, cells, ref_points):
        """Piola-mapped values (nc, npts, ndof_cell, 2) and divergences
        (nc, npts, ndof_cell) for several cells at shared reference points."""
        rvals, rdivs = self.ref.tabulate(ref_points)
        _, J, det = self.mesh.geometry_batch(cells, ref_points)
        vals = np.einsum("cqxd,qjd->cqjx", J, rvals) / det[:, :, None, None]
        divs = rdivs[None, :, :] / det[:, :, None]
        signs = self.cell_signs[cells]
        return vals * signs[:, None, :, None], divs * signs[:, None, :]


# ---------------------------------------------------------------------------
# interpolation and boundary conditions
# ---------------------------------------------------------------------------

def interpolate(space, fn, quad_order=None):
    """Interpolate an analytic function by matching the space's dof functionals.

    For the DG space `fn(pts) -> values` is evaluated at the physical nodal
    points.  For the H(div) space `fn(pts) -> (..., 2)` enters the edge normal
    moments and interior component moments, computed with quadrature.
    """
    mesh = space.mesh
    if isinstance(space, DGSpace):
        cells = np.arange(mesh.ncells)
        phys, _, _ = mesh.geometry_batch(cells, space.ref_nodes)
        vals = fn(phys.reshape(-1, 2)).reshape(mesh.ncells * space.ndof_cell)
        return Field(space, vals)

    k = space.order
    nq = quad_order if quad_order is not None else k + 4
    vec = np.zeros(space.ndofs)
    # edge normal moments, on the global edge parametrization (v0 -> v1,
    # which is the '+'-side traversal when flip=+1)
    s, ws = gauss_legendre_1d(nq)
    normals = mesh.edge_normals()
    lengths = mesh.edge_lengths()
    cplus = mesh.edge_cells[:, 0]
    for e in range(mesh.nedges):
        l, f = mesh.edge_local[e, 0], mesh.edge_flip[e, 0]
        rpts = ref_edge_points(l, f * s)
        phys, _, _ = mesh.geometry(cplus[e], rpts)
        un = fn(phys) @ normals[e]
        for m in range(k):
            pm = legendre_val(m, s)
            vec[e * k + m] = (lengths[e] / 2.0) * np.einsum("q,q,q->", ws, un, pm)
    # interior moments: reference integrals of det(J) J^{-1} f(F(x)) q(x)
    pts2, w2 = tensor_gauss(nq)
    cells = np.arange(mesh.ncells)
    phys, J, det = mesh.geometry_batch(cells, pts2)
    fvals = fn(phys.reshape(-1, 2)).reshape(mesh.ncells, len(pts2), 2)
    Jinv = np.linalg.inv(J)
    fref = det[:, :, None] * np.einsum("cqxd,cqd->cqx", Jinv, fvals)
    base = mesh.nedges * k
    idx = 0
    for comp in (0, 1):
        for (px, py) in space.ref.int_moment_powers[comp]:
            q = pts2[:, 0] ** px * pts2[:, 1] ** py
            mom = np.einsum("q,cq,q->c", w2, fref[:, :, comp], q)
            vec[base + idx::space.n_int_cell] = mom
            idx += 1
    return Field(space, vec)


def zero_boundary_vector(space, vec):
    """Zero the entries of `vec` belonging to boundary edge dofs."""
    out = np.array(vec, dtype=float, copy=True)
    if len(space.boundary_dofs):
        out[space.boundary_dofs] = 0.0
    return out


def constrain_matrix(A, dofs, diag=1.0):
    """Replace rows and columns `dofs` of sparse `A` by `diag` times identity."""
    if len(dofs) == 0:
        return A.tocsr()
    A = A.tolil()
    A[dofs, :] = 0.0
    A[:, dofs] = 0.0
    for d in dofs:
        A[d, d] = diag
    return A.tocsr()


def zero_columns(A, dofs):
    """Zero the columns `dofs` of sparse `A` (used for constrained source dofs)."""
    if len(dofs) == 0:
        return A.tocsr()
    A = A.tocsc(copy=True)
    for d in dofs:
        A.data[A.indptr[d]:A.indptr[d + 1]] = 0.0
    A.eliminate_zeros()
    return A.tocsr()
