"""Diagonally implicit Runge-Kutta time stepping with the TR-BDF2 tableau,
embedded error estimation and an arctan-limited adaptive step controller.

The loop is generic over a "stage system" providing

    n_dofs
    explicit_slope(y, t)                  -> K = M^{-1} B(y, t)
    solve_stage(y_rhs, alpha, dt, t, g)   -> (Y, newton_stats)
    diagnostics(y)                        -> dict with mass/energy/dissipation
                                             (optional)

so the same machinery drives the Cahn-Hilliard system and scalar test ODEs.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .chcore import StageFailureError
from .diagnostics import StepRecord


class StepCollapseError(RuntimeError):
    """Adaptive time step fell below the configured floor."""


@dataclass
class ButcherTableau:
    A: np.ndarray
    b: np.ndarray
    b_hat: np.ndarray
    c: np.ndarray
    p: int

    @property
    def s(self):
        return len(self.b)

    @property
    def stiffly_accurate(self):
        return np.array_equal(self.b, self.A[-1])

    def validate(self):
        A, b, bh, c = self.A, self.b, self.b_hat, self.c
        if np.any(np.triu(A, k=1) != 0.0):
            raise ValueError("tableau is not diagonally implicit")
        if abs(b.sum() - 1.0) > 1e-14 or abs(bh.sum() - 1.0) > 1e-14:
            raise ValueError("weights must sum to 1")
        if np.max(np.abs(A.sum(axis=1) - c)) > 1e-14:
            raise ValueError("row sums of A must equal c")
        return self


def trbdf2_tableau():
    """TR-BDF2: 3-stage, second order, L-stable, stiffly accurate, with an
    embedded companion for error estimation."""
    r = np.sqrt(2.0)
    g2 = 1.0 - 1.0 / r                     # = gamma/2 with gamma = 2 - sqrt(2)
    A = np.array([[0.0, 0.0, 0.0],
                  [g2, g2, 0.0],
                  [1.0 / (2.0 * r), 1.0 / (2.0 * r), g2]])
    b = np.array([1.0 / (2.0 * r), 1.0 / (2.0 * r), g2])
    b_hat = np.array([1.0 / 3.0 - 1.0 / (6.0 * r),
                      1.0 / (2.0 * r) + 1.0 / 3.0,
                      1.0 / 3.0 - 1.0 / (3.0 * r)])
    c = np.array([0.0, 2.0 - r, 1.0])
    return ButcherTableau(A, b, b_hat, c, p=2).validate()


@dataclass
class Controller:
    """Embedded-error step controller state.

    The step scaling is rho = s0 * eps_new^(-beta1/p) * eps_prev^(-beta2/p),
    smoothed by rho_hat = 1 + kappa*arctan((rho-1)/kappa).  A vanishing
    history factor (eps_prev = 0, e.g. the first step) is replaced by one;
    eps_new = 0 proposes the arctan-capped maximal growth.
    """
    tol_a: float = 1e-4
    tol_r: float = 1e-5
    s0: float = 0.9
    beta1: float = 0.4
    beta2: float = -0.2
    kappa: float = 2.0
    p: int = 2
    dt: float = 1e-4
    dt_max: float = 12.0
    dt_floor: float = 1e-12
    eps_prev: float = 0.0


def error_norm(y, y_hat, ctrl):
    """RMS of componentwise errors weighted by tol_a + tol_r*max(|y|,|y_hat|)."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    scale = ctrl.tol_a + ctrl.tol_r * np.maximum(np.abs(y), np.abs(y_hat))
    delta = (y - y_hat) / scale
    return float(np.sqrt(np.mean(delta ** 2)))


def propose_dt(eps_new, eps_prev, ctrl):
    """New step size and smoothing factor from the last two error estimates."""
    if eps_new < 0:
        raise ValueError("error estimate must be >= 0")
    if eps_new == 0.0:
        rho = np.inf
    else:
        hist = eps_prev ** (-ctrl.beta2 / ctrl.p) if eps_prev > 0.0 else 1.0
        rho = ctrl.s0 * eps_new ** (-ctrl.beta1 / ctrl.p) * hist
    rho_hat = 1.0 + ctrl.kappa * np.arctan((rho - 1.0) / ctrl.kappa)
    return rho_hat * ctrl.dt, rho_hat


@dataclass
class StageInfo:
    index: int
    t_stage: float
    alpha_dt: float
    newton: object
    Y: np.ndarray = None
    phi_rhs: np.ndarray = None


@dataclass
class StepStats:
    stages: list = field(default_factory=list)

    @property
    def newton_iters(self):
        return sum(s.newton.iterations for s in self.stages
                   if s.newton is not None)

    @property
    def gmres_iters(self):
        return sum(sum(s.newton.gmres_iters) for s in self.stages
                   if s.newton is not None)


def dirk_step(system, y_n, t, dt, tableau, stage_guesses=None,
              keep_stage_states=False):
    """One DIRK step: returns (y_next, y_hat, StepStats).

    Explicit stages (a_ii = 0) evaluate the slope through a mass solve;
    implicit stages solve the stage system by Newton, with the slope
    recovered as K_i = (Y_i - y_rhs) / (a_ii dt).
    """
    A, c = tableau.A, tableau.c
    s = tableau.s
    K = [None] * s
    stats = StepStats()
    guesses = stage_guesses or {}
    for i in range(s):
        t_i = t + c[i] * dt
        y_rhs = y_n.copy()
        for jj in range(i):
            if A[i, jj] != 0.0:
                y_rhs += dt * A[i, jj] * K[jj]
        if A[i, i] == 0.0:
            Y = y_rhs
            K[i] = system.explicit_slope(Y, t_i)
            info = StageInfo(i, t_i, 0.0, None)
        else:
            guess = guesses.get(i, y_n)
            Y, nstats = system.solve_stage(y_rhs, A[i, i], dt, t_i, guess)
            K[i] = (Y - y_rhs) / (A[i, i] * dt)
            info = StageInfo(i, t_i, A[i, i] * dt, nstats)
        if keep_stage_states:
            info.Y = Y.copy()
            info.phi_rhs = y_rhs.copy()
        stats.stages.append(info)
        Y_last = Y
    if tableau.stiffly_accurate:
        y_next = Y_last.copy()
    else:
        y_next = y_n + dt * sum(b_i * K_i for b_i, K_i in zip(tableau.b, K))
    y_hat = y_n + dt * sum(bh * K_i for bh, K_i in zip(tableau.b_hat, K))
    return y_next, y_hat, stats


@dataclass
class AdvanceResult:
    y: np.ndarray
    t: float
    records: list
    n_accepted: int
    n_rejected: int
    stage_stats: list            # per accepted step: list of StageInfo


def advance(system, y0, t0, t_end, tableau, ctrl, adaptive=True,
            on_accept=None, keep_stage_states=False):
    """Run the adaptive (or fixed-step) DIRK loop from t0 to t_end.

    Steps with error estimate eps > 1 are rejected and retried from the same
    state with the controller-reduced step; a Newton stage failure is treated
    as a rejection with dt halved.  Accepted steps update dt to
    min(dt_max, rho_hat*dt).  The final step is clipped to land on t_end.
    Rejected attempts never mutate the accepted state.
    """
    y = np.array(y0, dtype=float, copy=True)
    t = float(t0)
    records = []
    stage_stats = []
    n_acc = n_rej = 0
    step_idx = 0
    guesses = {}
    eps_tiny = 1e-12 * max(1.0, abs(t_end))
    while t < t_end - eps_tiny:
        dt_att = min(ctrl.dt, t_end - t)
        wall0 = time.perf_counter()
        failed = False
        try:
            y_next, y_hat, stats = _attempt(system, y, t, dt_att, tableau,
                                            guesses, keep_stage_states)
        except StageFailureError:
            if not adaptive:
                raise
            failed = True
        wall = time.perf_counter() - wall0
        step_idx += 1
        ctrl.dt = dt_att          # attempted step is the controller's step
        if failed:
            n_rej += 1
            records.append(StepRecord(step_idx, t + dt_att, dt_att, False,
                                      np.nan, np.nan, np.nan, np.nan, 0, 0,
                                      wall))
            ctrl.dt = dt_att / 2.0
            _check_floor(ctrl)
            continue
        eps = error_norm(y_next, y_hat, ctrl)
        if adaptive and eps > 1.0:
            n_rej += 1
            records.append(StepRecord(step_idx, t + dt_att, dt_att, False,
                                      eps, np.nan, np.nan, np.nan,
                                      stats.newton_iters, stats.gmres_iters,
                                      wall))
            ctrl.dt, _ = propose_dt(eps, ctrl.eps_prev, ctrl)
            _check_floor(ctrl)
            continue
        # accept
        n_acc += 1
        t = t_end if dt_att >= t_end - t - eps_tiny else t + dt_att
        y = y_next
        diag = system.diagnostics(y) if hasattr(system, "diagnostics") else {}
        records.append(StepRecord(
            step_idx, t, dt_att, True, eps,
            diag.get("mass", np.nan), diag.get("energy", np.nan),
            diag.get("dissipation", np.nan), stats.newton_iters,
            stats.gmres_iters, wall))
        for i, st in enumerate(stats.stages):
            if st.newton is not None and st.Y is not None:
                guesses[i] = st.Y
        if not keep_stage_states:
            for st in stats.stages:
                st.Y = None
                st.phi_rhs = None
        stage_stats.append(stats.stages)
        if adaptive:
            dt_new, _ = propose_dt(eps, ctrl.eps_prev, ctrl)
            ctrl.dt = min(ctrl.dt_max, dt_new)
            ctrl.eps_prev = eps
        if on_accept is not None:
            on_accept(n_acc, t, y)
    return AdvanceResult(y, t, records, n_acc, n_rej, stage_stats)


def _attempt(system, y, t, dt, tableau, guesses, keep):
    # stage states are always kept within the step so the accepted stage
    # solutions can seed the next step's Newton iterations
    return dirk_step(system, y, t, dt, tableau, guesses,
                     keep_stage_states=True)


def _check_floor(ctrl):
    if ctrl.dt < ctrl.dt_floor:
        raise StepCollapseError(
            f"time step collapsed below the floor {ctrl.dt_floor:g}")
