"""Structured quadrilateral meshes: topology, periodicity, perturbation, geometry.

The mesh is a structured nx-by-ny grid of bilinear quadrilateral cells on
[0, Lx] x [0, Ly].  Periodic directions are identified topologically (vertex
classes); cell geometry always uses the owning cell's unwrapped corner
coordinates, so a cell touching a periodic seam keeps its physical shape.

Conventions
-----------
* Reference cell is [-1, 1]^2 with corners counterclockwise:
  0:(-1,-1) 1:(1,-1) 2:(1,1) 3:(-1,1).
* Local edges (counterclockwise): 0 bottom, 1 right, 2 top, 3 left.
* Cells are numbered row-major (cell = cy*nx + cx); edges with normals along
  x come first, then edges with normals along y.
* Of the (up to) two cells sharing an edge, the one sorted first by
  (cell index, local edge) is the "+" side; the edge normal points from
  "+" to "-", i.e. outward from the "+" cell.
"""

import numpy as np

from .quadrature import tensor_gauss

REF_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
# local edge -> (first corner, second corner) in counterclockwise traversal
LOCAL_EDGE_CORNERS = ((0, 1), (1, 2), (2, 3), (3, 0))
# outward unit normals of the reference cell per local edge
REF_EDGE_NORMALS = np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])


class MeshError(ValueError):
    """Invalid mesh construction arguments."""


class GeometryError(RuntimeError):
    """Degenerate cell geometry (non-positive Jacobian determinant)."""


def ref_edge_points(local_edge, s):
    """Reference coordinates of points on a local edge, parametrized by
    s in [-1, 1] along the counterclockwise traversal."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    a = REF_CORNERS[LOCAL_EDGE_CORNERS[local_edge][0]]
    b = REF_CORNERS[LOCAL_EDGE_CORNERS[local_edge][1]]
    return 0.5 * np.outer(1.0 - s, a) + 0.5 * np.outer(1.0 + s, b)


def bilinear_shape(ref_points):
    """Vertex shape functions and gradients of the bilinear map.

    Returns (N, dN) of shapes (npts, 4) and (npts, 4, 2).
    """
    p = np.atleast_2d(np.asarray(ref_points, dtype=float))
    xi, eta = p[:, 0], p[:, 1]
    N = np.empty((len(p), 4))
    dN = np.empty((len(p), 4, 2))
    for i, (cx, cy) in enumerate(REF_CORNERS):
        N[:, i] = 0.25 * (1.0 + cx * xi) * (1.0 + cy * eta)
        dN[:, i, 0] = 0.25 * cx * (1.0 + cy * eta)
        dN[:, i, 1] = 0.25 * cy * (1.0 + cx * xi)
    return N, dN


class Mesh:
    """Structured quadrilateral mesh with optional periodicity.

    Immutable after construction; `perturb` returns a new mesh.
    """

    def __init__(self, nx, ny, Lx, Ly, periodic_x, periodic_y, vertices,
                 cell_vertices, cell_coords, edge_data):
        self.nx, self.ny = nx, ny
        self.Lx, self.Ly = Lx, Ly
        self.dx, self.dy = Lx / nx, Ly / ny
        self.periodic_x, self.periodic_y = periodic_x, periodic_y
        self.ncells = nx * ny
        self.vertices = vertices
        self.cells = cell_vertices
        self.cell_coords = cell_coords
        (self.edge_vertices, self.edge_cells, self.edge_local,
         self.edge_flip) = edge_data
        self.nedges = len(self.edge_vertices)
        self.interior_edges = np.flatnonzero(self.edge_cells[:, 1] >= 0)
        self.boundary_edges = np.flatnonzero(self.edge_cells[:, 1] < 0)
        self._check_jacobians()

    # -- geometry -----------------------------------------------------------

    def geometry(self, cell, ref_points):
        """Bilinear map data for one cell at reference points.

        Returns (physical points (npts, 2), Jacobians (npts, 2, 2),
        determinants (npts,)).
        """
        if not 0 <= cell < self.ncells:
            raise IndexError(f"cell index {cell} out of range")
        phys, J, det = self.geometry_batch(np.array([cell]), ref_points)
        return phys[0], J[0], det[0]

    def geometry_batch(self, cells, ref_points):
        """Vectorized bilinear map data for many cells at shared points."""
        N, dN = bilinear_shape(ref_points)
        coords = self.cell_coords[cells]              # (nc, 4, 2)
        phys = np.einsum("qi,cix->cqx", N, coords)
        J = np.einsum("cix,qid->cqxd", coords, dN)
        det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        return phys, J, det

    def edge_lengths(self):
        """Length of every edge (edges are straight segments)."""
        a, b = self._edge_endpoints()
        return np.linalg.norm(b - a, axis=1)

    def edge_normals(self):
        """Unit normal of every edge, oriented from the '+' side to the '-' side."""
        a, b = self._edge_endpoints()
        t = b - a
        t /= np.linalg.norm(t, axis=1)[:, None]
        # rotate the '+'-cell counterclockwise traversal tangent by -90 degrees
        n = np.column_stack([t[:, 1], -t[:, 0]])
        return n

    def cell_areas(self):
        pts, w = tensor_gauss(4)
        _, _, det = self.geometry_batch(np.arange(self.ncells), pts)
        return det @ w

    def _edge_endpoints(self):
        """Physical endpoints of each edge traversed counterclockwise as seen
        from the '+' cell (unwrapped coordinates of the '+' cell)."""
        cplus = self.edge_cells[:, 0]
        lplus = self.edge_local[:, 0]
        fplus = self.edge_flip[:, 0]
        corner_a = np.array([LOCAL_EDGE_CORNERS[l][0] for l in lplus])
        corner_b = np.array([LOCAL_EDGE_CORNERS[l][1] for l in lplus])
        a = self.cell_coords[cplus, corner_a]
        b = self.cell_coords[cplus, corner_b]
        # flip=-1 means the '+'-cell traversal runs against the global edge
        # direction; endpoints swap but tangent/normal below use the + traversal
        return a, b

    def _check_jacobians(self):
        pts, _ = tensor_gauss(4)
        _, _, det = self.geometry_batch(np.arange(self.ncells), pts)
        if np.any(det <= 0.0):
            bad = int(np.argwhere(np.any(det <= 0.0, axis=1))[0, 0])
            raise GeometryError(f"non-positive Jacobian determinant in cell {bad}")


def build_structured(nx, ny, Lx, Ly, periodic_x=False, periodic_y=False):
    """Build a structured quadrilateral mesh of nx-by-ny cells on [0,Lx]x[0,Ly]."""
    if nx < 1 or ny < 1:
        raise MeshError(f"cell counts must be >= 1, got nx={nx}, ny={ny}")
    if Lx <= 0 or Ly <= 0:
        raise MeshError(f"domain lengths must be > 0, got Lx={Lx}, Ly={Ly}")
    nx, ny = int(nx), int(ny)
    dx, dy = Lx / nx, Ly / ny

    nvx = nx if periodic_x else nx + 1
    nvy = ny if periodic_y else ny + 1
    gx, gy = np.meshgrid(np.arange(nvx), np.arange(nvy), indexing="xy")
    vertices = np.column_stack([gx.ravel() * dx, gy.ravel() * dy])

    def vid(ix, iy):
        jx = ix % nx if periodic_x else ix
        jy = iy % ny if periodic_y else iy
        return jy * nvx + jx

    cells = np.empty((nx * ny, 4), dtype=np.int64)
    for cy in range(ny):
        for cx in range(nx):
            c = cy * nx + cx
            cells[c] = (vid(cx, cy), vid(cx + 1, cy),
                        vid(cx + 1, cy + 1), vid(cx, cy + 1))

    # edges with normal along x (vertical grid lines), then along y
    ev, ec, el, ef = [], [], [], []

    def add_edge(v0, v1, sides):
        # sides: list of (cell, local_edge, flip); '+' side sorts first
        sides = sorted(sides)
        (cp, lp, fp) = sides[0]
        if len(sides) == 2:
            (cm, lm, fm) = sides[1]
        else:
            cm, lm, fm = -1, -1, 0
        ev.append((v0, v1))
        ec.append((cp, cm))
        el.append((lp, lm))
        ef.append((fp, fm))

    nlx = nx if periodic_x else nx + 1
    for iy in range(ny):
        for ix in range(nlx):
            v0, v1 = vid(ix, iy), vid(ix, iy + 1)
            sides = []
            if periodic_x or ix > 0:
                sides.append((iy * nx + (ix - 1) % nx, 1, +1))   # right edge, upward
            if periodic_x or ix < nx:
                sides.append((iy * nx + ix % nx, 3, -1))         # left edge, downward
            add_edge(v0, v1, sides)

    nly = ny if periodic_y else ny + 1
    for iy in range(nly):
        for ix in range(nx):
            v0, v1 = vid(ix, iy), vid(ix + 1, iy)
            sides = []
            if periodic_y or iy > 0:
                sides.append((((iy - 1) % ny) * nx + ix, 2, -1))  # top edge, leftward
            if periodic_y or iy < ny:
                sides.append(((iy % ny) * nx + ix, 0, +1))        # bottom edge, rightward
            add_edge(v0, v1, sides)

    edge_data = (np.array(ev, dtype=np.int64),
                 np.array(ec, dtype=np.int64),
                 np.array(el, dtype=np.int64),
                 np.array(ef, dtype=np.int64))

    cell_coords = _unwrapped_cell_coords(nx, ny, dx, dy, periodic_x, periodic_y,
                                         vertices, cells)
    return Mesh(nx, ny, Lx, Ly, periodic_x, periodic_y, vertices, cells,
                cell_coords, edge_data)


def _unwrapped_cell_coords(nx, ny, dx, dy, periodic_x, periodic_y, vertices, cells):
    """Per-cell corner coordinates, unwrapping periodic seams by one period."""
    coords = np.empty((nx * ny, 4, 2))
    Lx, Ly = nx * dx, ny * dy
    for cy in range(ny):
        for cx in range(nx):
            c = cy * nx + cx
            grid = ((cx, cy), (cx + 1, cy), (cx + 1, cy + 1), (cx, cy + 1))
            for k, (ix, iy) in enumerate(grid):
                v = cells[c, k]
                off = np.zeros(2)
                if periodic_x and ix == nx:
                    off[0] = Lx
                if periodic_y and iy == ny:
                    off[1] = Ly
                coords[c, k] = vertices[v] + off
    return coords


def perturb(mesh, factor, seed):
    """Return a copy of `mesh` with interior vertices randomly displaced.

    Each vertex not lying on a periodic seam or physical boundary moves by an
    independent uniform offset in [-factor*dx, factor*dx] x [-factor*dy,
    factor*dy].  Uses numpy's PCG64 generator, so results are reproducible
    across platforms for a fixed seed.  Topology is unchanged.
    """
    if factor < 0:
        raise MeshError("perturbation factor must be >= 0")
    nx, ny = mesh.nx, mesh.ny
    nvx = nx if mesh.periodic_x else nx + 1
    nvy = ny if mesh.periodic_y else ny + 1
    rng = np.random.default_rng(np.random.PCG64(seed))
    offsets = rng.uniform(-1.0, 1.0, size=(nvy * nvx, 2))
    offsets[:, 0] *= factor * mesh.dx
    offsets[:, 1] *= factor * mesh.dy
    gx, gy = np.meshgrid(np.arange(nvx), np.arange(nvy), indexing="xy")
    interior = ((gx.ravel() >= 1) & (gx.ravel() <= nx - 1)
                & (gy.ravel() >= 1) & (gy.ravel() <= ny - 1))
    offsets[~interior] = 0.0
    vertices = mesh.vertices + offsets
    cell_coords = _unwrapped_cell_coords(nx, ny, mesh.dx, mesh.dy,
                                         mesh.periodic_x, mesh.periodic_y,
                                         vertices, mesh.cells)
    edge_data = (mesh.edge_vertices, mesh.edge_cells, mesh.edge_local,
                 mesh.edge_flip)
    return Mesh(nx, ny, mesh.Lx, mesh.Ly, mesh.periodic_x, mesh.periodic_y,
                vertices, mesh.cells, cell_coords, edge_data)
