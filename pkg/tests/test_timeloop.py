import numpy as np
import pytest

from chdg.chcore import NewtonStats, StageFailureError
from chdg.timeloop import (ButcherTableau, Controller, StepCollapseError,
                           advance, dirk_step, error_norm, propose_dt,
                           trbdf2_tableau)


class ScalarSystem:
    """1-dof stage system for a scalar ODE y' = f(y, t), stages solved by
    damped Newton to machine precision."""
    n_dofs = 1

    def __init__(self, f, dfdy):
        self.f, self.dfdy = f, dfdy

    def explicit_slope(self, y, t):
        return self.f(y, t)

    def solve_stage(self, y_rhs, alpha, dt, t, guess):
        y = np.array(guess, dtype=float, copy=True)
        for _ in range(100):
            g = y - y_rhs - alpha * dt * self.f(y, t)
            dy = g / (1.0 - alpha * dt * self.dfdy(y, t))
            y -= dy
            if abs(dy[0]) < 1e-15:
                break
        return y, NewtonStats(iterations=1, converged=True)


def cubic_system():
    return ScalarSystem(lambda y, t: -y ** 3 + np.sin(t),
                        lambda y, t: -3.0 * y ** 2)


class TestTableau:
    def test_consistency(self):
        tab = trbdf2_tableau()
        assert abs(tab.b.sum() - 1.0) < 1e-15
        assert abs(tab.b_hat.sum() - 1.0) < 1e-15
        assert np.abs(tab.A.sum(axis=1) - tab.c).max() < 1e-15

    def test_printed_coefficients(self):
        r = np.sqrt(2.0)
        tab = trbdf2_tableau()
        assert np.allclose(tab.c, [0.0, 2 - r, 1.0], atol=1e-15)
        assert abs(tab.A[1, 0] - (1 - 1 / r)) < 1e-15
        assert abs(tab.A[1, 1] - (1 - 1 / r)) < 1e-15
        assert abs(tab.A[2, 0] - 1 / (2 * r)) < 1e-15
        assert np.allclose(tab.b_hat,
                           [1 / 3 - 1 / (6 * r), 1 / (2 * r) + 1 / 3,
                            1 / 3 - 1 / (3 * r)], atol=1e-16)

    def test_stiffly_accurate(self):
        tab = trbdf2_tableau()
        assert tab.stiffly_accurate
        assert np.array_equal(tab.b, tab.A[-1])

    def test_validate_rejects_bad(self):
        tab = trbdf2_tableau()
        bad = ButcherTableau(tab.A, tab.b * 1.5, tab.b_hat, tab.c, 2)
        with pytest.raises(ValueError):
            bad.validate()


class TestDirkStep:
    def test_zero_rhs_identity(self):
        sys0 = ScalarSystem(lambda y, t: 0.0 * y, lambda y, t: 0.0 * y)
        y0 = np.array([1.3])
        y1, yh, _ = dirk_step(sys0, y0, 0.0, 0.5, trbdf2_tableau())
        assert np.abs(y1 - y0).max() < 1e-15
        assert np.abs(yh - y0).max() < 1e-15

    def test_stability_function(self):
        # one linear-ODE step reproduces R(z) = 1 + z b^T (I - z A)^-1 1
        lam, dt = -3.7, 0.21
        tab = trbdf2_tableau()
        sysl = ScalarSystem(lambda y, t: lam * y, lambda y, t: lam + 0 * y)
        y1, _, _ = dirk_step(sysl, np.array([1.0]), 0.0, dt, tab)
        z = lam * dt
        R = 1 + z * (tab.b @ np.linalg.solve(np.eye(3) - z * tab.A,
                                             np.ones(3)))
        assert abs(y1[0] - R) < 1e-12

    def test_main_method_order_two(self):
        from scipy.integrate import solve_ivp
        ref = solve_ivp(lambda t, y: -y ** 3 + np.sin(t), [0, 2], [1.0],
                        rtol=1e-13, atol=1e-14)
        yex = ref.y[0, -1]
        tab = trbdf2_tableau()
        errs = []
        for nsteps in (32, 64, 128):
            ctrl = Controller(dt=2.0 / nsteps)
            res = advance(cubic_system(), np.array([1.0]), 0.0, 2.0, tab,
                          ctrl, adaptive=False)
            errs.append(abs(res.y[0] - yex))
        rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(np.abs(rates - 2.0) <= 0.1)


class TestErrorNorm:
    def test_equal_is_zero(self):
        c = Controller()
        assert error_norm(np.ones(5), np.ones(5), c) == 0.0

    def test_hand_value(self):
        c = Controller(tol_a=1e-4, tol_r=1e-5)
        eps = error_norm(np.array([1.0]), np.array([1.0 + 1e-4]), c)
        assert abs(eps - 0.9090826447031298) < 1e-13

    def test_numerator_linearity(self):
        c = Controller(tol_a=1e-4, tol_r=0.0)
        y = np.array([2.0, -1.0])
        d = np.array([1e-6, -2e-6])
        e10 = error_norm(y, y + 10 * d, c)
        assert abs(e10 - 10 * error_norm(y, y + d, c)) < 1e-9 * e10

    def test_magnitude_weighting(self):
        # the denominator uses |y|, so negative solutions weigh correctly
        c = Controller(tol_a=0.0, tol_r=1e-5)
        e_pos = error_norm(np.array([2.0]), np.array([2.0 + 1e-6]), c)
        e_neg = error_norm(np.array([-2.0]), np.array([-2.0 - 1e-6]), c)
        assert abs(e_pos - e_neg) < 1e-12


class TestProposeDt:
    def test_equal_errors(self):
        c = Controller(dt=1.0)
        dt, rho = propose_dt(1.0, 1.0, c)
        assert abs(rho - 0.9000832085561145) < 1e-13
        assert abs(dt - rho) < 1e-15

    def test_zero_history_rule(self):
        c = Controller(dt=1.0)
        dt, rho = propose_dt(1e-2, 0.0, c)
        assert abs(rho - 2.1248729355513910) < 1e-12

    def test_arctan_cap(self):
        c = Controller(dt=1.0)
        _, rho = propose_dt(1e-30, 0.5, c)
        assert rho <= 1 + 2 * np.pi / 2 + 1e-12
        _, rho0 = propose_dt(0.0, 0.0, c)
        assert abs(rho0 - (1 + 2 * np.pi / 2)) < 1e-14

    def test_bounds(self, rng):
        c = Controller(dt=1.0)
        for _ in range(50):
            e1, e0 = rng.uniform(1e-8, 1e3, 2)
            _, rho = propose_dt(e1, e0, c)
            assert 1 - 2 * np.pi / 2 < rho < 1 + 2 * np.pi / 2

    def test_negative_error_rejected(self):
        with pytest.raises(ValueError):
            propose_dt(-1.0, 0.0, Controller())


class TestAdvance:
    def test_fixed_step_count(self):
        ctrl = Controller(dt=1e-3)
        res = advance(cubic_system(), np.array([1.0]), 0.0, 0.01,
                      trbdf2_tableau(), ctrl, adaptive=False)
        assert res.n_accepted == 10
        assert res.n_rejected == 0
        assert res.t == 0.01

    def test_final_step_clipped(self):
        ctrl = Controller(dt=3e-3)
        res = advance(cubic_system(), np.array([1.0]), 0.0, 0.01,
                      trbdf2_tableau(), ctrl, adaptive=False)
        assert res.n_accepted == 4
        assert res.t == 0.01
        assert abs(res.records[-1].dt - 1e-3) < 1e-15

    def test_fixed_step_deterministic(self):
        runs = []
        for _ in range(2):
            ctrl = Controller(dt=1e-3)
            res = advance(cubic_system(), np.array([1.0]), 0.0, 0.01,
                          trbdf2_tableau(), ctrl, adaptive=False)
            runs.append(res.y.copy())
        assert np.array_equal(runs[0], runs[1])

    def test_dt_cap_respected(self):
        sysl = ScalarSystem(lambda y, t: -y, lambda y, t: -1.0 + 0 * y)
        ctrl = Controller(dt=1e-3, dt_max=0.05)
        res = advance(sysl, np.array([1.0]), 0.0, 2.0, trbdf2_tableau(),
                      ctrl, adaptive=True)
        assert max(r.dt for r in res.records if r.accepted) <= 0.05 + 1e-15

    def test_rejection_purity(self):
        # every accepted step is exactly reproducible from its predecessor,
        # regardless of interleaved rejected attempts
        stiff = ScalarSystem(lambda y, t: -80.0 * (y - np.cos(8 * t)),
                             lambda y, t: -80.0 + 0 * y)
        ctrl = Controller(dt=0.3, tol_a=1e-6, tol_r=1e-6)
        y0 = np.array([2.0])
        res = advance(stiff, y0, 0.0, 1.0, trbdf2_tableau(), ctrl,
                      adaptive=True)
        assert res.n_rejected > 0
        acc = [r for r in res.records if r.accepted]
        # replay: starting from y0, applying only accepted (t, dt) pairs
        # reproduces the final state bitwise
        guesses = {}
        y, t = y0.copy(), 0.0
        for r in acc:
            y, _, stats = dirk_step(stiff, y, t, r.dt, trbdf2_tableau(),
                                    guesses, keep_stage_states=True)
            for i, st in enumerate(stats.stages):
                if st.newton is not None:
                    guesses[i] = st.Y
            t += r.dt
        assert np.array_equal(y, res.y)

    def test_stage_failure_halves_dt(self):
        class Flaky(ScalarSystem):
            def __init__(self):
                super().__init__(lambda y, t: -y, lambda y, t: -1.0 + 0 * y)
                self.calls = 0

            def solve_stage(self, y_rhs, alpha, dt, t, guess):
                self.calls += 1
                if dt > 0.02:
                    raise StageFailureError("too big")
                return super().solve_stage(y_rhs, alpha, dt, t, guess)

        ctrl = Controller(dt=0.08)
        res = advance(Flaky(), np.array([1.0]), 0.0, 0.1, trbdf2_tableau(),
                      ctrl, adaptive=True)
        assert res.n_rejected >= 2          # 0.08 -> 0.04 -> 0.02
        assert res.t == 0.1

    def test_stage_failure_fixed_mode_raises(self):
        class Failing(ScalarSystem):
            def __init__(self):
                super().__init__(lambda y, t: -y, lambda y, t: -1.0 + 0 * y)

            def solve_stage(self, *a, **k):
                raise StageFailureError("no")
        ctrl = Controller(dt=0.05)
        with pytest.raises(StageFailureError):
            advance(Failing(), np.array([1.0]), 0.0, 0.1, trbdf2_tableau(),
                    ctrl, adaptive=False)

    def test_step_collapse(self):
        class Failing(ScalarSystem):
            def __init__(self):
                super().__init__(lambda y, t: -y, lambda y, t: -1.0 + 0 * y)

            def solve_stage(self, *a, **k):
                raise StageFailureError("no")
        ctrl = Controller(dt=1e-3, dt_floor=1e-6)
        with pytest.raises(StepCollapseError):
            advance(Failing(), np.array([1.0]), 0.0, 0.1, trbdf2_tableau(),
                    ctrl, adaptive=True)
