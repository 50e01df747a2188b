"""Sparse operator assembly: mass matrices, mixed divergence, upwind/centered
transport, interior-penalty Laplacian, and load vectors.

All loops are vectorized over cells or facets; assembly is serial and
deterministic (fixed scatter order, duplicate summation by sorted indices).
"""

import numpy as np
import scipy.sparse as sp

from .mesh import ref_edge_points
from .quadrature import gauss_legendre_1d, tensor_gauss
from .spaces import DGSpace, Field, HdivSpace

UPWIND = "upwind"
CENTERED = "centered"


# ---------------------------------------------------------------------------
# cell tabulations
# ---------------------------------------------------------------------------

class CellTab:
    """Geometry and basis tabulations at a tensor Gauss rule, shared between
    assembly routines acting on the same mesh."""

    def __init__(self, mesh, quad_order=4):
        self.mesh = mesh
        self.quad_order = quad_order
        self.qp, self.qw = tensor_gauss(quad_order)
        cells = np.arange(mesh.ncells)
        self.phys, self.J, self.detJ = mesh.geometry_batch(cells, self.qp)
        self.Jinv = np.linalg.inv(self.J)
        self.wdet = self.qw[None, :] * self.detJ            # (nc, nq)
        self._dg = {}
        self._rt = {}

    def dg_basis(self, space):
        """(values (nq, nloc), physical gradients (nc, nq, nloc, 2))."""
        key = space.degree
        if key not in self._dg:
            vals, rgrads = space.tabulate(self.qp)
            pgrads = np.einsum("cqdx,qjd->cqjx", self.Jinv, rgrads)
            self._dg[key] = (vals, pgrads)
        return self._dg[key]

    def rt_basis(self, space):
        """(physical values (nc, nq, nloc, 2), divergences (nc, nq, nloc))."""
        key = space.order
        if key not in self._rt:
            self._rt[key] = space.tabulate_batch(np.arange(self.mesh.ncells),
                                                 self.qp)
        return self._rt[key]

    def evaluate_dg(self, space, vec):
        """DG coefficient vector evaluated at all cell quadrature points."""
        vals, _ = self.dg_basis(space)
        coeffs = vec.reshape(self.mesh.ncells, space.ndof_cell)
        return coeffs @ vals.T                               # (nc, nq)


class EdgeTab:
    """Facet tabulations on interior edges: matched quadrature points, traces
    from both sides, normals, lengths and the interior-penalty length scale."""

    def __init__(self, mesh, dg_space, nq=4):
        self.mesh = mesh
        self.s, self.ws = gauss_legendre_1d(nq)
        E = mesh.interior_edges
        self.edges = E
        self.cells = mesh.edge_cells[E]                      # (nE, 2)
        self.locals = mesh.edge_local[E]
        self.flips = mesh.edge_flip[E]
        self.normals = mesh.edge_normals()[E]
        self.lengths = mesh.edge_lengths()[E]
        areas = mesh.cell_areas()
        self.h_e = (areas[self.cells[:, 0]] + areas[self.cells[:, 1]]) / (
            2.0 * self.lengths)

        nE, nqp = len(E), nq
        nloc = dg_space.ndof_cell
        self.trace = np.empty((2, nE, nqp, nloc))
        self.grad = np.empty((2, nE, nqp, nloc, 2))
        self.phys = np.empty((2, nE, nqp, 2))
        for side in (0, 1):
            for l in range(4):
                for f in (1, -1):
                    mask = (self.locals[:, side] == l) & (self.flips[:, side] == f)
                    if not mask.any():
                        continue
                    rpts = ref_edge_points(l, f * self.s)
                    vals, rgrads = dg_space.tabulate(rpts)
                    cs = self.cells[mask, side]
                    phys, J, _ = mesh.geometry_batch(cs, rpts)
                    Jinv = np.linalg.inv(J)
                    self.trace[side, mask] = vals[None, :, :]
                    self.grad[side, mask] = np.einsum("cqdx,qjd->cqjx",
                                                      Jinv, rgrads)
                    self.phys[side, mask] = phys
        # quadrature weight including the (straight) edge arc-length factor
        self.wline = self.ws[None, :] * (self.lengths[:, None] / 2.0)


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

def _weight_at_quad(space, weight, tab):
    if weight is None:
        return np.ones_like(tab.wdet)
    if np.isscalar(weight):
        return float(weight) * np.ones_like(tab.wdet)
    if isinstance(weight, Field):
        if weight.space is not space and not isinstance(weight.space, DGSpace):
            raise ValueError("weight field must live in a DG space")
        return tab.evaluate_dg(weight.space, weight.vec)
    w = np.asarray(weight)
    if w.shape == tab.wdet.shape:
        return w
    raise ValueError("unsupported weight")


def dg_mass_blocks(space, tab, weight=None):
    """Per-cell dense mass blocks (nc, nloc, nloc) of the DG space."""
    vals, _ = tab.dg_basis(space)
    w = _weight_at_quad(space, weight, tab) * tab.wdet
    return np.einsum("cq,qi,qj->cij", w, vals, vals)


def assemble_mass(space, weight=None, tab=None):
    """Mass matrix of a DG or H(div) space, optionally weighted by a constant
    or a DG field (scalar spaces only)."""
    if tab is None:
        tab = CellTab(space.mesh)
    if isinstance(space, DGSpace):
        blocks = dg_mass_blocks(space, tab, weight)
        return sp.bsr_matrix((blocks, np.arange(space.mesh.ncells),
                              np.arange(space.mesh.ncells + 1)),
                             shape=(space.ndofs, space.ndofs)).tocsr()
    if not isinstance(space, HdivSpace):
        raise TypeError("unsupported space")
    if weight is not None and not np.isscalar(weight):
        raise ValueError("H(div) mass supports constant weights only")
    wconst = 1.0 if weight is None else float(weight)
    vals, _ = tab.rt_basis(space)
    blocks = np.einsum("cq,cqix,cqjx->cij", wconst * tab.wdet, vals, vals)
    return _scatter_cellwise(blocks, space.cell_dofs, space.cell_dofs,
                             (space.ndofs, space.ndofs))


def assemble_div(hdiv, dg):
    """Mixed divergence matrix D[i, j] = <psi_i, div v_j>.

    The entries are reference-cell integrals (the Piola divergence scaling
    cancels the volume element), hence independent of cell geometry.
    """
    if hdiv.mesh is not dg.mesh:
        raise ValueError("spaces must share a mesh")
    nq = max(hdiv.order + 1, dg.degree + 1)
    qp, qw = tensor_gauss(nq)
    psi, _ = dg.tabulate(qp)
    _, rdivs = hdiv.ref.tabulate(qp)
    Dref = np.einsum("q,qi,qj->ij", qw, psi, rdivs)
    nc = dg.mesh.ncells
    blocks = Dref[None, :, :] * hdiv.cell_signs[:, None, :]
    rows = (np.arange(nc)[:, None] * dg.ndof_cell +
            np.arange(dg.ndof_cell)[None, :])
    return _scatter_cellwise(blocks, rows, hdiv.cell_dofs,
                             (dg.ndofs, hdiv.ndofs))


def assemble_transport(dg, velocity, t=0.0, scheme=UPWIND, tab=None,
                       edge_tab=None):
    """Advection operator T_u with T_u[i,j] = -<grad_h psi_i, u psi_j>
    + sum over interior facets of [[u psi_i]] psi~_j, where psi~ is the upwind
    (or centered) facet value.

    The Jacobian advection block is then M + alpha*dt*T_u, and the sign
    convention makes 1^T T_u = 0 for velocities with continuous normal
    component that vanish on non-periodic boundaries.
    """
    if scheme not in (UPWIND, CENTERED):
        raise ValueError(f"unknown flux scheme {scheme!r}")
    mesh = dg.mesh
    if tab is None:
        tab = CellTab(mesh)
    if edge_tab is None:
        edge_tab = EdgeTab(mesh, dg)
    vals, pgrads = tab.dg_basis(dg)
    u_cell = velocity(tab.phys.reshape(-1, 2), t).reshape(mesh.ncells, -1, 2)
    cell_blocks = -np.einsum("cq,cqix,cqx,qj->cij", tab.wdet, pgrads,
                             u_cell, vals)
    rows = (np.arange(mesh.ncells)[:, None] * dg.ndof_cell +
            np.arange(dg.ndof_cell)[None, :])
    T = _scatter_cellwise(cell_blocks, rows, rows, (dg.ndofs, dg.ndofs))

    et = edge_tab
    u_edge = velocity(et.phys[0].reshape(-1, 2), t).reshape(len(et.edges), -1, 2)
    un = np.einsum("eqx,ex->eq", u_edge, et.normals)         # u . n_plus
    if scheme == UPWIND:
        s_plus = 0.5 * (np.sign(un) + 1.0)
    else:
        s_plus = 0.5 * np.ones_like(un)
    s_minus = 1.0 - s_plus
    w = et.wline
    nloc = dg.ndof_cell
    ndof = dg.ndofs
    data, rr, cc = [], [], []
    dof_p = et.cells[:, 0][:, None] * nloc + np.arange(nloc)[None, :]
    dof_m = et.cells[:, 1][:, None] * nloc + np.arange(nloc)[None, :]
    for irow, (jump_sign, tr_i, dof_i) in enumerate(
            [(1.0, et.trace[0], dof_p), (-1.0, et.trace[1], dof_m)]):
        for sel, tr_j, dof_j in [(s_plus, et.trace[0], dof_p),
                                 (s_minus, et.trace[1], dof_m)]:
            blk = jump_sign * np.einsum("eq,eq,eq,eqi,eqj->eij",
                                        w, un, sel, tr_i, tr_j)
            data.append(blk.ravel())
            rr.append(np.broadcast_to(dof_i[:, :, None], blk.shape).ravel())
            cc.append(np.broadcast_to(dof_j[:, None, :], blk.shape).ravel())
    F = sp.coo_matrix((np.concatenate(data),
                       (np.concatenate(rr), np.concatenate(cc))),
                      shape=(ndof, ndof)).tocsr()
    return (T + F).tocsr()


def assemble_ip_laplacian(dg, kappa=10.0, tab=None, edge_tab=None):
    """Symmetric interior-penalty Laplacian on the DG space.

    Facet terms use the scalar jump [[psi]] = psi+ - psi-, the average normal
    derivative {n . grad psi} with the '+'-side normal, and the penalty
    kappa/h_e with h_e = (|K+| + |K-|)/(2 |e|).  Boundary facet terms are
    omitted (pure Neumann), so constants lie in the kernel.
    """
    if kappa <= 0:
        raise ValueError("penalty parameter must be positive")
    mesh = dg.mesh
    if tab is None:
        tab = CellTab(mesh)
    if edge_tab is None:
        edge_tab = EdgeTab(mesh, dg)
    _, pgrads = tab.dg_basis(dg)
    cell_blocks = np.einsum("cq,cqix,cqjx->cij", tab.wdet, pgrads, pgrads)
    rows = (np.arange(mesh.ncells)[:, None] * dg.ndof_cell +
            np.arange(dg.ndof_cell)[None, :])
    A = _scatter_cellwise(cell_blocks, rows, rows, (dg.ndofs, dg.ndofs))

    et = edge_tab
    nloc = dg.ndof_cell
    w = et.wline
    dof_p = et.cells[:, 0][:, None] * nloc + np.arange(nloc)[None, :]
    dof_m = et.cells[:, 1][:, None] * nloc + np.arange(nloc)[None, :]
    ngrad = [np.einsum("eqix,ex->eqi", et.grad[s], et.normals) for s in (0, 1)]
    jumps = [(1.0, et.trace[0], dof_p), (-1.0, et.trace[1], dof_m)]
    avgs = [(0.5, ngrad[0], dof_p), (0.5, ngrad[1], dof_m)]
    pen = kappa / et.h_e
    data, rr, cc = [], [], []

    def scat(blk, di, dj):
        data.append(blk.ravel())
        rr.append(np.broadcast_to(di[:, :, None], blk.shape).ravel())
        cc.append(np.broadcast_to(dj[:, None, :], blk.shape).ravel())

    for (sj, trj, dj) in jumps:
        for (sa, ga, da) in avgs:
            # -int [[psi_i]]{n.grad psi_j} - int [[psi_j]]{n.grad psi_i}
            blk = -sj * sa * np.einsum("eq,eqi,eqj->eij", w, trj, ga)
            scat(blk, dj, da)
            scat(np.transpose(blk, (0, 2, 1)), da, dj)
        for (si, tri, di) in jumps:
            blk = sj * si * np.einsum("e,eq,eqi,eqj->eij", pen, w, tri, trj)
            scat(blk, di, dj)
    F = sp.coo_matrix((np.concatenate(data),
                       (np.concatenate(rr), np.concatenate(cc))),
                      shape=(dg.ndofs, dg.ndofs)).tocsr()
    return (A + F).tocsr()


def assemble_forcing(dg, source, t=0.0, tab=None):
    """Load vector <psi_i, S(x, t)>."""
    if tab is None:
        tab = CellTab(dg.mesh)
    vals, _ = tab.dg_basis(dg)
    if source is None:
        return np.zeros(dg.ndofs)
    svals = source(tab.phys.reshape(-1, 2), t).reshape(dg.mesh.ncells, -1)
    return np.einsum("cq,cq,qi->ci", tab.wdet, svals, vals).ravel()


def _scatter_cellwise(blocks, rows, cols, shape):
    """Assemble per-cell dense blocks into a CSR matrix."""
    nc, ni, nj = blocks.shape
    rr = np.broadcast_to(rows[:, :, None], (nc, ni, nj)).ravel()
    cc = np.broadcast_to(cols[:, None, :], (nc, ni, nj)).ravel()
    return sp.coo_matrix((blocks.ravel(), (rr, cc)), shape=shape).tocsr()
