"""Catalog of simulation setups: initial conditions, velocities, counter
forcings, meshes and solver/controller parameters for each scenario.

Case setups are plain numeric records (safe to override from config files);
`build_run` turns one into meshes, spaces, assembled operators and callables.
"""

from dataclasses import dataclass

import numpy as np

from .chcore import CHOperators, CHParams, CHStageSystem, SolverConfig
from .mesh import build_structured, perturb, ref_edge_points
from .quadrature import gauss_legendre_1d
from .spaces import DGSpace, Field, HdivSpace, interpolate
from .timeloop import Controller

BUBBLE_ELLIPSES = np.array([
    # x_i,  y_i,  r_i
    [0.50, 0.32, 0.23],
    [1.00, 0.65, 0.25],
    [1.59, 0.60, 0.28],
    [0.55, 0.80, 0.09],
    [1.20, 0.17, 0.11],
])
BUBBLE_DELTA0 = 0.2
TRANSPORT_SIGMA0 = 0.03
SHEAR_STRIP = (0.05, 0.95)


@dataclass
class CaseSetup:
    name: str
    nx: int
    ny: int
    Lx: float = 1.0
    Ly: float = 1.0
    periodic_x: bool = True
    periodic_y: bool = True
    perturb_factor: float = 0.0
    perturb_seed: int = 1
    order: int = 2
    quad_order: int = 4
    d0: float = 1.0
    eps: float = 0.1
    flux_scheme: str = "upwind"
    kappa_ip: float = 10.0
    t_end: float = 1.0
    dt0: float = 1e-3
    adaptive: bool = True
    dt_max: float = 12.0
    ic_seed: int = 2024
    u0: float = 0.0
    tol_a: float = 1e-4
    tol_r: float = 1e-5
    s0: float = 0.9
    beta1: float = 0.4
    beta2: float = -0.2
    kappa_ctrl: float = 2.0


# ---------------------------------------------------------------------------
# separable profiles with derivative stacks (for counter-forcing terms)
# ---------------------------------------------------------------------------

def sine_profile(freq):
    """sin(freq*x) together with derivatives up to fourth order."""
    def stack(a):
        s, c = np.sin(freq * a), np.cos(freq * a)
        return np.stack([s, freq * c, -freq ** 2 * s,
                         -freq ** 3 * c, freq ** 4 * s])
    return stack


def _tanh_derivs(z):
    t = np.tanh(z)
    d1 = 1.0 - t ** 2
    d2 = -2.0 * t * d1
    d3 = d1 * (6.0 * t ** 2 - 2.0)
    d4 = 8.0 * t * d1 * (2.0 - 3.0 * t ** 2)
    return np.stack([t, d1, d2, d3, d4])


def step_profile(a0, a1, sigma):
    """Smoothed indicator of [a0, a1]: (tanh((a-a0)/s) - tanh((a-a1)/s))/2."""
    def stack(a):
        t0 = _tanh_derivs((a - a0) / sigma)
        t1 = _tanh_derivs((a - a1) / sigma)
        out = 0.5 * (t0 - t1)
        for n in range(5):
            out[n] /= sigma ** n
        return out
    return stack


def separable_function(profx, profy):
    """phi(x, y) = f(x) g(y) from two profile stacks."""
    def fn(pts):
        fx = profx(pts[..., 0])
        gy = profy(pts[..., 1])
        return fx[0] * gy[0]
    return fn


def separable_gradient(profx, profy):
    def fn(pts):
        fx = profx(pts[..., 0])
        gy = profy(pts[..., 1])
        return np.stack([fx[1] * gy[0], fx[0] * gy[1]], axis=-1)
    return fn


def counter_forcing(profx, profy, d0, eps):
    """S = -div(d grad(phi^3 - phi - eps^2 lap phi)) for phi = f(x) g(y).

    Balances the Cahn-Hilliard right-hand side so phi is a steady solution.
    """
    def fn(pts):
        fx = profx(pts[..., 0])
        gy = profy(pts[..., 1])
        u = fx[0] * gy[0]
        lap = fx[2] * gy[0] + fx[0] * gy[2]
        lap2 = fx[4] * gy[0] + 2.0 * fx[2] * gy[2] + fx[0] * gy[4]
        grad2 = (fx[1] * gy[0]) ** 2 + (fx[0] * gy[1]) ** 2
        return -d0 * (6.0 * u * grad2 + 3.0 * u ** 2 * lap - lap
                      - eps ** 2 * lap2)
    return fn


# ---------------------------------------------------------------------------
# case factories
# ---------------------------------------------------------------------------

def case_manufactured(nx=16):
    """Counter-forced steady state sin(2 pi x) sin(4 pi y); fixed steps."""
    return CaseSetup(name="manufactured", nx=nx, ny=nx,
                     d0=1.0, eps=0.1, t_end=0.01, dt0=1e-3, adaptive=False)


def case_spinodal2d(seed=2024, nx=32):
    """Random uniform [-1, 1] initial data; adaptive run to t = 4."""
    return CaseSetup(name="spinodal2d", nx=nx, ny=nx, d0=0.1, eps=0.02,
                     t_end=4.0, dt0=1e-4, adaptive=True, ic_seed=seed)


def case_transport(u0=1.0, scheme="upwind"):
    """Advected smooth rectangle with moving counter-forcing on a perturbed
    20^2 mesh; advection dominated (d = 1/4000)."""
    return CaseSetup(name="transport", nx=20, ny=20, d0=1.0 / 4000.0,
                     eps=0.01, flux_scheme=scheme, t_end=8.0, dt0=0.01,
                     adaptive=False, perturb_factor=0.06, perturb_seed=1,
                     u0=u0)


def case_robustness(k_dx=0, k_dt=6, eps_choice=2.0 ** -4):
    """Solver-stressing cosine initial condition; 20 fixed steps."""
    nx = 8 * 2 ** k_dx
    dt = 0.002 * 2.0 ** (-k_dt)
    return CaseSetup(name="robustness", nx=nx, ny=nx, d0=1.0, eps=eps_choice,
                     t_end=20 * dt, dt0=dt, adaptive=False)


def case_bubbles(t_end=30.0):
    """Five elliptic inclusions relaxing, merging and being absorbed; the
    time step spans several orders of magnitude."""
    return CaseSetup(name="bubbles", nx=64, ny=32, Lx=2.0, Ly=1.0,
                     d0=1.0 / 100.0, eps=1.0 / 50.0, t_end=t_end, dt0=1e-5,
                     adaptive=True, dt_max=12.0)


def case_shear(nx=64):
    """Shear flow (1 + y) e_x over a random strip, Neumann walls at
    y = 0, 1, periodic in x; filaments form along the flow."""
    return CaseSetup(name="shear", nx=nx, ny=nx, periodic_x=True,
                     periodic_y=False, perturb_factor=0.06, perturb_seed=1,
                     d0=1.0 / 400.0, eps=1.0 / 50.0, t_end=20.0, dt0=1e-5,
                     adaptive=True)


CASE_FACTORIES = {
    "manufactured": case_manufactured,
    "spinodal2d": case_spinodal2d,
    "transport": case_transport,
    "robustness": case_robustness,
    "bubbles": case_bubbles,
    "shear": case_shear,
}


def make_case(name, **kwargs):
    try:
        factory = CASE_FACTORIES[name]
    except KeyError:
        raise ValueError(f"unknown case {name!r}; valid cases: "
                         + ", ".join(sorted(CASE_FACTORIES)))
    return factory(**kwargs)


# ---------------------------------------------------------------------------
# wiring
# ---------------------------------------------------------------------------

@dataclass
class RunContext:
    setup: CaseSetup
    mesh: object
    dg: DGSpace
    hdiv: HdivSpace
    params: CHParams
    ops: CHOperators
    system: CHStageSystem
    phi0: np.ndarray
    controller: Controller
    velocity: object = None
    forcing: object = None
    exact: object = None          # exact(pts, t) -> phi values, if known
    exact_grad: object = None     # exact_grad(pts, t) -> (..., 2), if known


def _wrap(x, L):
    return np.mod(x, L)


def _case_callables(setup):
    """(velocity, forcing, exact, exact_grad, ic) for a case setup."""
    name = setup.name
    if name == "manufactured":
        px, py = sine_profile(2 * np.pi), sine_profile(4 * np.pi)
        phi_fn = separable_function(px, py)
        S = counter_forcing(px, py, setup.d0, setup.eps)
        return (None, lambda pts, t: S(pts), lambda pts, t: phi_fn(pts),
                lambda pts, t: separable_gradient(px, py)(pts),
                lambda space: interpolate(space, phi_fn))
    if name == "spinodal2d":
        def ic(space):
            rng = np.random.default_rng(np.random.PCG64(setup.ic_seed))
            return Field(space, rng.uniform(-1.0, 1.0, space.ndofs))
        return None, None, None, None, ic
    if name == "transport":
        px = step_profile(0.4, 0.6, TRANSPORT_SIGMA0)
        py = step_profile(0.2, 0.8, TRANSPORT_SIGMA0)
        phi_fn = separable_function(px, py)
        S = counter_forcing(px, py, setup.d0, setup.eps)
        uvec = np.array([setup.u0, 0.0])

        def shift(pts, t):
            out = np.empty_like(pts)
            out[..., 0] = _wrap(pts[..., 0] - uvec[0] * t, setup.Lx)
            out[..., 1] = _wrap(pts[..., 1] - uvec[1] * t, setup.Ly)
            return out

        velocity = (lambda pts, t: np.broadcast_to(uvec, pts.shape).copy()) \
            if setup.u0 != 0.0 else None
        return (velocity,
                lambda pts, t: S(shift(pts, t)),
                lambda pts, t: phi_fn(shift(pts, t)),
                lambda pts, t: separable_gradient(px, py)(shift(pts, t)),
                lambda space: interpolate(space, phi_fn))
    if name == "robustness":
        def phi_fn(pts):
            return 0.5 * (1.0 - np.cos(4 * np.pi * pts[..., 0])) * \
                (1.0 - np.cos(2 * np.pi * pts[..., 1])) - 1.0
        return None, None, None, None, \
            lambda space: interpolate(space, phi_fn)
    if name == "bubbles":
        def phi_fn(pts):
            x, y = pts[..., 0], pts[..., 1]
            inside = np.zeros(x.shape, dtype=bool)
            for xi, yi, ri in BUBBLE_ELLIPSES:
                inside |= (x - xi) ** 2 + (1.0 - BUBBLE_DELTA0) * \
                    (y - yi) ** 2 < ri ** 2
            return np.where(inside, 1.0, -1.0)
        return None, None, None, None, \
            lambda space: interpolate(space, phi_fn)
    if name == "shear":
        def velocity(pts, t):
            out = np.zeros_like(pts)
            out[..., 0] = 1.0 + pts[..., 1]
            return out

        def ic(space):
            rng = np.random.default_rng(np.random.PCG64(setup.ic_seed))
            vals = rng.uniform(-1.0, 1.0, space.ndofs)
            cells = np.arange(space.mesh.ncells)
            phys, _, _ = space.mesh.geometry_batch(cells, space.ref_nodes)
            ynode = phys[..., 1].ravel()
            lo, hi = SHEAR_STRIP
            vals[(ynode < lo) | (ynode > hi)] = 0.0
            return Field(space, vals)
        return velocity, None, None, None, ic
    raise ValueError(f"no callables for case {setup.name!r}")


def build_run(setup, solver=None):
    """Materialize a case: mesh, spaces, operators, initial state, controller.

    Verifies the velocity facet-continuity contract before returning.
    """
    solver = solver or SolverConfig()
    mesh = build_structured(setup.nx, setup.ny, setup.Lx, setup.Ly,
                            setup.periodic_x, setup.periodic_y)
    if setup.perturb_factor > 0.0:
        mesh = perturb(mesh, setup.perturb_factor, setup.perturb_seed)
    dg = DGSpace(mesh, setup.order - 1)
    hdiv = HdivSpace(mesh, setup.order)
    params = CHParams(d0=setup.d0, eps=setup.eps,
                      flux_scheme=setup.flux_scheme,
                      kappa_ip=setup.kappa_ip)
    velocity, forcing, exact, exact_grad, ic = _case_callables(setup)
    if velocity is not None:
        jump, bdry = verify_velocity_contract(mesh, velocity)
        if jump > 1e-12 or bdry > 1e-12:
            raise ValueError(
                f"velocity violates the facet contract: interior normal jump "
                f"{jump:.2e}, boundary normal component {bdry:.2e}")
    ops = CHOperators(dg, hdiv, params, velocity, forcing, setup.quad_order)
    system = CHStageSystem(ops, solver)
    phi0 = ic(dg).vec
    controller = Controller(tol_a=setup.tol_a, tol_r=setup.tol_r,
                            s0=setup.s0, beta1=setup.beta1, beta2=setup.beta2,
                            kappa=setup.kappa_ctrl, dt=setup.dt0,
                            dt_max=setup.dt_max)
    return RunContext(setup, mesh, dg, hdiv, params, ops, system, phi0,
                      controller, velocity, forcing, exact, exact_grad)


def verify_velocity_contract(mesh, velocity, t=0.0, nq=4):
    """Check that u has a continuous normal component across interior facets
    and zero normal component on boundary facets.

    Returns (max interior jump, max boundary normal component).
    """
    s, _ = gauss_legendre_1d(nq)
    normals = mesh.edge_normals()
    jump = 0.0
    bdry = 0.0
    for e in range(mesh.nedges):
        un = []
        for side in (0, 1):
            c = mesh.edge_cells[e, side]
            if c < 0:
                continue
            l, f = mesh.edge_local[e, side], mesh.edge_flip[e, side]
            phys, _, _ = mesh.geometry(c, ref_edge_points(l, f * s))
            un.append(velocity(phys, t) @ normals[e])
        if len(un) == 2:
            jump = max(jump, float(np.abs(un[0] - un[1]).max()))
        else:
            bdry = max(bdry, float(np.abs(un[0]).max()))
    return jump, bdry
