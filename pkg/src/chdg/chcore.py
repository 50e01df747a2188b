"""Four-field mixed DG Cahn-Hilliard core: residuals, Jacobian, row-swapped
block system, Schur-complement preconditioner, Newton driver, auxiliary
solves and energy functionals.

Unknowns are the phase field phi and chemical potential mu (DG space) plus
the flux j and weak gradient sigma (H(div) space).  Within an implicit
Runge-Kutta stage with coefficient alpha and step dt, the stage system is

    M (phi - phi_rhs) - alpha*dt * B(phi) = 0,

where B collects divergence of the flux, advection and forcing, and the
auxiliary fields satisfy (with scaling c0 and diffusion magnitude d0)

    M_div sigma + D^T phi             = 0
    M mu - c0 <psi, F'(phi)> + c0 eps^2 D sigma = 0
    M_div j - (d0/c0) D^T mu          = 0.

The Newton linearization in the natural ordering (phi, j, mu, sigma) is the
4x4 block Jacobian; swapping to the ordering (j, sigma | phi, mu) exposes a
2x2 H(div) mass block whose elimination yields a Schur complement in
(phi, mu) that is preconditioned by two Helmholtz-like diagonal blocks.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (CellTab, EdgeTab, assemble_div, assemble_forcing,
                       assemble_ip_laplacian, assemble_mass,
                       assemble_transport, dg_mass_blocks, UPWIND)
from .linalg import InnerSolver, LinearOperator, SorApplier, gmres
from .spaces import zero_columns, constrain_matrix


# fixed double-well potential
def double_well(phi):
    return 0.25 * (1.0 - phi ** 2) ** 2


def double_well_prime(phi):
    return phi ** 3 - phi


def double_well_second(phi):
    return 3.0 * phi ** 2 - 1.0


class StageFailureError(RuntimeError):
    """Newton iteration for an implicit stage failed to converge."""


@dataclass
class CHParams:
    """Physical parameters: constant diffusion magnitude d0, interface width
    eps, facet flux scheme and interior-penalty constant (preconditioner)."""
    d0: float = 1.0
    eps: float = 0.1
    flux_scheme: str = UPWIND
    kappa_ip: float = 10.0

    def __post_init__(self):
        if self.d0 <= 0 or self.eps <= 0:
            raise ValueError("d0 and eps must be positive")


@dataclass
class StageContext:
    """Per-stage scalars: alpha*dt, the scaling c0 = tau/eps^2 and
    tau = eps*sqrt(alpha*dt*d0) that balances the two Schur Laplacians."""
    alpha_dt: float
    c0: float
    tau: float

    @classmethod
    def make(cls, alpha_dt, params, c0_mode="scaled"):
        tau = params.eps * np.sqrt(alpha_dt * params.d0)
        c0 = tau / params.eps ** 2 if c0_mode == "scaled" else 1.0
        if c0 <= 0.0:
            raise ValueError("stage context requires alpha_dt > 0")
        return cls(alpha_dt=alpha_dt, c0=c0, tau=tau)

    @classmethod
    def unit(cls):
        """Context with c0 = 1, for auxiliary solves outside stage systems."""
        return cls(alpha_dt=0.0, c0=1.0, tau=0.0)


@dataclass
class StageState:
    phi: np.ndarray
    j: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray

    def copy(self):
        return StageState(self.phi.copy(), self.j.copy(), self.mu.copy(),
                          self.sigma.copy())


@dataclass
class SolverConfig:
    gmres_rtol: float = 1e-8
    newton_rtol: float = 1e-8
    linear_solver: str = "gmres"        # or "direct"
    inner_method: str = "direct"        # or "chebyshev_jacobi" / "cg_jacobi"
    inner_degree: int = 3
    sor_sweeps: int = 1
    max_newton: int = 25
    gmres_restart: int = 500
    gmres_max_iter: int = 2000
    c0_mode: str = "scaled"

    def validate(self, has_velocity):
        if self.linear_solver not in ("gmres", "direct"):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")
        if self.inner_method not in ("direct", "chebyshev_jacobi", "cg_jacobi"):
            raise ValueError(f"unknown inner method {self.inner_method!r}")
        if self.inner_method == "cg_jacobi" and has_velocity:
            raise ValueError("cg_jacobi inner solves are not valid for the "
                             "nonsymmetric transport block; use "
                             "chebyshev_jacobi or direct")


@dataclass
class NewtonStats:
    iterations: int = 0
    gmres_iters: list = field(default_factory=list)
    first_residual: float = 0.0
    final_residual: float = 0.0
    residual_history: list = field(default_factory=list)
    linear_converged: bool = True
    converged: bool = False


class CHOperators:
    """Assembled discrete operators for one mesh/space/parameter setup.

    Everything that does not depend on the Newton iterate or the time step is
    assembled once: mass matrices (and the per-cell inverse of the DG mass),
    the constrained divergence matrix, the transport matrix for the given
    velocity, and the interior-penalty Laplacian used by the preconditioner.
    """

    def __init__(self, dg, hdiv, params, velocity=None, forcing=None,
                 quad_order=4):
        if dg.mesh is not hdiv.mesh:
            raise ValueError("spaces must share a mesh")
        self.mesh = dg.mesh
        self.dg, self.hdiv = dg, hdiv
        self.params = params
        self.velocity = velocity
        self.forcing = forcing
        self.tab = CellTab(self.mesh, quad_order)
        self.edge_tab = EdgeTab(self.mesh, dg, quad_order)
        # analytic forcings carry tripled frequencies (phi^3 balance); two
        # extra points keep their moments well below solver tolerances
        self.tab_forcing = (CellTab(self.mesh, quad_order + 2)
                            if forcing is not None else self.tab)

        self.M_blocks = dg_mass_blocks(dg, self.tab)
        self.M = sp.bsr_matrix((self.M_blocks, np.arange(self.mesh.ncells),
                                np.arange(self.mesh.ncells + 1)),
                               shape=(dg.ndofs, dg.ndofs)).tocsr()
        self.M_inv_blocks = np.linalg.inv(self.M_blocks)
        bd = hdiv.boundary_dofs
        self.M_div = constrain_matrix(assemble_mass(hdiv, tab=self.tab), bd)
        self._mdiv_lu = spla.splu(self.M_div.tocsc())
        self.D = zero_columns(assemble_div(hdiv, dg), bd)
        self.DT = self.D.T.tocsr()
        if velocity is not None:
            self.T = assemble_transport(dg, velocity, 0.0, params.flux_scheme,
                                        self.tab, self.edge_tab)
        else:
            self.T = None
        self.L_ip = assemble_ip_laplacian(dg, params.kappa_ip, self.tab,
                                          self.edge_tab)
        self._sor = None
        self._forcing_cache = None
        self._ps_cache = None

    # -- small solves -------------------------------------------------------

    def mass_solve(self, rhs):
        r = rhs.reshape(self.mesh.ncells, self.dg.ndof_cell)
        return np.einsum("cij,cj->ci", self.M_inv_blocks, r).ravel()

    def mdiv_solve(self, rhs):
        return self._mdiv_lu.solve(rhs)

    # -- nonlinear pieces ---------------------------------------------------

    def potential_vector(self, phi):
        """<psi_i, F'(phi_h)> evaluated with the cell quadrature."""
        vals, _ = self.tab.dg_basis(self.dg)
        phiq = self.tab.evaluate_dg(self.dg, phi)
        fq = double_well_prime(phiq)
        return np.einsum("cq,cq,qi->ci", self.tab.wdet, fq, vals).ravel()

    def potential_hessian(self, phi):
        """F'' = 3 M_{phi^2} - M as a weighted DG mass matrix."""
        phiq = self.tab.evaluate_dg(self.dg, phi)
        blocks = dg_mass_blocks(self.dg, self.tab, double_well_second(phiq))
        return sp.bsr_matrix((blocks, np.arange(self.mesh.ncells),
                              np.arange(self.mesh.ncells + 1)),
                             shape=(self.dg.ndofs, self.dg.ndofs)).tocsr()

    def forcing_vector(self, t):
        if self.forcing is None:
            return np.zeros(self.dg.ndofs)
        if self._forcing_cache is not None and self._forcing_cache[0] == t:
            return self._forcing_cache[1]
        vec = assemble_forcing(self.dg, self.forcing, t, self.tab_forcing)
        self._forcing_cache = (t, vec)
        return vec

    # -- variational pieces -------------------------------------------------

    def solve_auxiliary(self, phi, ctx):
        """Auxiliary fields (sigma, mu, j) for a given phase field."""
        p = self.params
        sigma = self.mdiv_solve(-(self.DT @ phi))
        mu = self.mass_solve(ctx.c0 * (self.potential_vector(phi)
                                       - p.eps ** 2 * (self.D @ sigma)))
        j = self.mdiv_solve((p.d0 / ctx.c0) * (self.DT @ mu))
        return sigma, mu, j

    def rhs_operator(self, phi, t, ctx=None):
        """B(phi, t): right-hand side of M dphi/dt = B."""
        ctx = ctx or StageContext.unit()
        _, _, j = self.solve_auxiliary(phi, ctx)
        out = -(self.D @ j) + self.forcing_vector(t)
        if self.T is not None:
            out -= self.T @ phi
        return out

    def residual(self, state, phi_rhs, ctx, t):
        """Residuals (R_phi, R_j, R_mu, R_sigma) of the stage system."""
        p = self.params
        adt, c0 = ctx.alpha_dt, ctx.c0
        r_phi = self.M @ (state.phi - phi_rhs) + adt * (
            self.D @ state.j - self.forcing_vector(t))
        if self.T is not None:
            r_phi += adt * (self.T @ state.phi)
        r_j = self.M_div @ state.j - (p.d0 / c0) * (self.DT @ state.mu)
        r_mu = (self.M @ state.mu - c0 * self.potential_vector(state.phi)
                + c0 * p.eps ** 2 * (self.D @ state.sigma))
        r_sigma = self.M_div @ state.sigma + self.DT @ state.phi
        return r_phi, r_j, r_mu, r_sigma

    # -- diagnostics --------------------------------------------------------

    def total_mass(self, phi):
        return np.ones(self.dg.ndofs) @ (self.M @ phi)

    def energy(self, phi):
        """Discrete total energy: integral of F(phi) + (eps^2/2)|sigma|^2."""
        sigma, _, _ = self.solve_auxiliary(phi, StageContext.unit())
        phiq = self.tab.evaluate_dg(self.dg, phi)
        vals, _ = self.tab.rt_basis(self.hdiv)
        coeffs = sigma[self.hdiv.cell_dofs]
        sq = np.einsum("cqjx,cj->cqx", vals, coeffs)
        dens = double_well(phiq) + 0.5 * self.params.eps ** 2 * (
            sq[..., 0] ** 2 + sq[..., 1] ** 2)
        return float(np.sum(self.tab.wdet * dens))

    def dissipation(self, j):
        """Weighted flux norm ||j/sqrt(d0)||^2; equals -dH/dt when S=0, u=0."""
        return float(j @ (self.M_div @ j)) / self.params.d0

    def sor_applier(self, sweeps):
        if self._sor is None or self._sor.sweeps != sweeps:
            self._sor = SorApplier(self.M_div, omega=1.0, sweeps=sweeps)
        return self._sor


class CHJacobian:
    """Newton Jacobian blocks with natural and row/column-swapped actions.

    Natural ordering (phi, j, mu, sigma); swapped ordering moves the two
    H(div) fields in front: unknowns (j, sigma, phi, mu), equations
    (j-eq, sigma-eq, mu-eq, phi-eq).
    """

    def __init__(self, ops, ctx, Fpp):
        self.ops = ops
        self.ctx = ctx
        self.Fpp = Fpp
        self.nd = ops.dg.ndofs
        self.nh = ops.hdiv.ndofs
        self.shape = (2 * self.nd + 2 * self.nh,) * 2

    def split_natural(self, x):
        nd, nh = self.nd, self.nh
        return (x[:nd], x[nd:nd + nh], x[nd + nh:2 * nd + nh],
                x[2 * nd + nh:])

    def split_swapped(self, x):
        nd, nh = self.nd, self.nh
        return (x[:nh], x[nh:2 * nh], x[2 * nh:2 * nh + nd],
                x[2 * nh + nd:])

    def apply_natural(self, x):
        """Rows (phi-eq, j-eq, mu-eq, sigma-eq), columns (phi, j, mu, sigma)."""
        o, ctx = self.ops, self.ctx
        p = o.params
        xphi, xj, xmu, xsig = self.split_natural(x)
        r_phi = o.M @ xphi + ctx.alpha_dt * (o.D @ xj)
        if o.T is not None:
            r_phi += ctx.alpha_dt * (o.T @ xphi)
        r_j = o.M_div @ xj - (p.d0 / ctx.c0) * (o.DT @ xmu)
        r_mu = -ctx.c0 * (self.Fpp @ xphi) + o.M @ xmu + \
            ctx.c0 * p.eps ** 2 * (o.D @ xsig)
        r_sig = o.DT @ xphi + o.M_div @ xsig
        return np.concatenate([r_phi, r_j, r_mu, r_sig])

    def apply_swapped(self, x):
        """Rows (j-eq, sigma-eq, mu-eq, phi-eq), columns (j, sigma, phi, mu)."""
        o, ctx = self.ops, self.ctx
        p = o.params
        xj, xsig, xphi, xmu = self.split_swapped(x)
        r_j = o.M_div @ xj - (p.d0 / ctx.c0) * (o.DT @ xmu)
        r_sig = o.M_div @ xsig + o.DT @ xphi
        r_mu = ctx.c0 * p.eps ** 2 * (o.D @ xsig) - ctx.c0 * (self.Fpp @ xphi) \
            + o.M @ xmu
        r_phi = ctx.alpha_dt * (o.D @ xj) + o.M @ xphi
        if o.T is not None:
            r_phi += ctx.alpha_dt * (o.T @ xphi)
        return np.concatenate([r_j, r_sig, r_mu, r_phi])

    def swapped_operator(self):
        return LinearOperator(self.shape, self.apply_swapped)

    def assemble_swapped(self):
        """Assembled sparse matrix of the swapped system (direct solves)."""
        o, ctx = self.ops, self.ctx
        p = o.params
        Mt = o.M + ctx.alpha_dt * o.T if o.T is not None else o.M
        return sp.bmat([
            [o.M_div, None, None, -(p.d0 / ctx.c0) * o.DT],
            [None, o.M_div, o.DT, None],
            [None, ctx.c0 * p.eps ** 2 * o.D, -ctx.c0 * self.Fpp, o.M],
            [ctx.alpha_dt * o.D, None, Mt, None]], format="csc")


def build_jacobian(ops, state, ctx):
    """Jacobian at the current Newton iterate (exact F'' reassembly)."""
    return CHJacobian(ops, ctx, ops.potential_hessian(state.phi))


def schur_preconditioner(jac, config=None):
    """Block lower-triangular preconditioner of the swapped system.

    The leading 2x2 H(div) mass block is applied approximately by forward SOR
    sweeps; the trailing (phi, mu) block uses the Schur-complement surrogate
    P_S = diag(M + (2 tau/eps) M + tau L_ip,  M + tau L_ip + alpha dt T)
    with each diagonal block solved by the configured fixed-cost inner method.
    """
    config = config or SolverConfig()
    ops, ctx = jac.ops, jac.ctx
    p = ops.params
    sor = ops.sor_applier(config.sor_sweeps)

    key = (ctx.alpha_dt, ctx.tau, config.inner_method, config.inner_degree)
    if ops._ps_cache is not None and ops._ps_cache[0] == key:
        inner1, inner2 = ops._ps_cache[1]
    else:
        # the F'' surrogate (phase values near +-1) is c0 F'' ~ 2 c0 M
        # = (2 tau/eps^2) M; keeping its weight at the c0 scale is what makes
        # the block robust for the large steps the adaptive controller takes
        B1 = ((1.0 + 2.0 * ctx.tau / p.eps ** 2) * ops.M
              + ctx.tau * ops.L_ip).tocsr()
        B2 = (ops.M + ctx.tau * ops.L_ip).tocsr()
        if ops.T is not None:
            B2 = (B2 + ctx.alpha_dt * ops.T).tocsr()
        inner1 = InnerSolver(B1, config.inner_method, config.inner_degree)
        method2 = config.inner_method
        if method2 == "cg_jacobi" and ops.T is not None:
            raise ValueError("cg_jacobi invalid for the transport block")
        inner2 = InnerSolver(B2, method2, config.inner_degree)
        ops._ps_cache = (key, (inner1, inner2))

    adt, c0 = ctx.alpha_dt, ctx.c0

    def apply(r):
        r_j, r_sig, r_mu, r_phi = jac.split_swapped(r)
        xj = sor.apply(r_j)
        xsig = sor.apply(r_sig)
        rm = r_mu - c0 * p.eps ** 2 * (ops.D @ xsig)
        rp = r_phi - adt * (ops.D @ xj)
        xphi = inner1.solve(rm)
        xmu = inner2.solve(rp)
        return np.concatenate([xj, xsig, xphi, xmu])

    return LinearOperator(jac.shape, apply)


def newton_solve(ops, phi_rhs, ctx, t, guess, config=None):
    """Solve the implicit stage system by Newton iteration.

    The auxiliary fields are re-solved exactly from the current phase field at
    every iteration, so only the phase-equation block carries a nonzero
    residual.  Convergence is the maximum block residual norm dropping by
    `newton_rtol` relative to the first iterate; growth over three consecutive
    iterations or hitting the iteration cap raises StageFailureError, which
    the time loop treats as a rejected step.
    """
    config = config or SolverConfig()
    config.validate(ops.T is not None)
    stats = NewtonStats()
    phi = np.array(guess, dtype=float, copy=True)
    state = None
    res0 = None
    grow_count = 0
    prev_norm = None

    for it in range(config.max_newton + 1):
        sigma, mu, j = ops.solve_auxiliary(phi, ctx)
        state = StageState(phi, j, mu, sigma)
        residuals = ops.residual(state, phi_rhs, ctx, t)
        norm = max(np.linalg.norm(r) for r in residuals)
        stats.residual_history.append(norm)
        if res0 is None:
            res0 = norm
            stats.first_residual = norm
        stats.final_residual = norm
        if norm <= config.newton_rtol * res0:
            stats.converged = True
            return state, stats
        if prev_norm is not None and norm > prev_norm:
            grow_count += 1
            if grow_count >= 3:
                raise StageFailureError(
                    f"Newton residual grew for 3 consecutive iterations "
                    f"(residual {norm:.3e}, initial {res0:.3e})")
        else:
            grow_count = 0
        prev_norm = norm
        if it == config.max_newton:
            raise StageFailureError(
                f"Newton did not converge in {config.max_newton} iterations "
                f"(residual {norm:.3e}, initial {res0:.3e})")

        jac = build_jacobian(ops, state, ctx)
        r_phi, r_j, r_mu, r_sigma = residuals
        rhs = -np.concatenate([r_j, r_sigma, r_mu, r_phi])
        if config.linear_solver == "direct":
            lu = spla.splu(jac.assemble_swapped())
            dx = lu.solve(rhs)
            stats.gmres_iters.append(0)
        else:
            precon = schur_preconditioner(jac, config)
            dx, rep = gmres(jac.swapped_operator(), rhs, precon,
                            rtol=config.gmres_rtol,
                            max_iter=config.gmres_max_iter,
                            restart=config.gmres_restart)
            stats.gmres_iters.append(rep.iterations)
            stats.linear_converged &= rep.converged
        dj, dsig, dphi, dmu = jac.split_swapped(dx)
        phi = phi + dphi
        state = StageState(phi, j + dj, mu + dmu, sigma + dsig)
        stats.iterations += 1


class CHStageSystem:
    """Adapter between the DIRK time loop and the Cahn-Hilliard stage solver."""

    def __init__(self, ops, config=None):
        self.ops = ops
        self.config = config or SolverConfig()
        self.n_dofs = ops.dg.ndofs

    def explicit_slope(self, phi, t):
        """M^{-1} B(phi, t) for the explicit first stage."""
        return self.ops.mass_solve(self.ops.rhs_operator(phi, t))

    def solve_stage(self, phi_rhs, alpha, dt, t, guess):
        ctx = StageContext.make(alpha * dt, self.ops.params,
                                self.config.c0_mode)
        state, stats = newton_solve(self.ops, phi_rhs, ctx, t, guess,
                                    self.config)
        return state.phi, stats

    def diagnostics(self, phi):
        ctx = StageContext.unit()
        sigma, mu, j = self.ops.solve_auxiliary(phi, ctx)
        return {"mass": self.ops.total_mass(phi),
                "energy": self.ops.energy(phi),
                "dissipation": self.ops.dissipation(j)}
