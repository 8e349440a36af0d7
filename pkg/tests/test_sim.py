import math

import numpy as np
import pytest

from hjblab.coeffs import constant, piecewise, poly
from hjblab.errors import ConfigurationError, InvalidControlError
from hjblab.fields import ValueField, build_grid
from hjblab.problems import (
    CoefficientPair,
    ControlProblem,
    ControlSet,
    ProblemMetadata,
    builtin_problem,
)
from hjblab.sim import (
    ConstantControl,
    ScheduleControl,
    SimConfig,
    dynkin_residual,
    estimate_cost,
    exit_time,
    moment_check,
    random_schedule,
    simulate_path,
)

INF = float("inf")


def degenerate(b=0.0, s=0.0, l=0.0, rho=0.5):
    """Deterministic test dynamics: ellipticity floor 0 disables the check."""
    return ControlProblem(
        drift=CoefficientPair(constant(b), constant(0.0)),
        diffusion=CoefficientPair(constant(s), constant(0.0)),
        cost=CoefficientPair(constant(l), constant(0.0)),
        rho=rho,
        control_set=ControlSet.interval(0.0, 1.0),
        metadata=ProblemMetadata(0.0, abs(b), abs(s), abs(l), max(abs(l), 1e-300), 0.0),
    )


def brownian(l=0.0, rho=0.5):
    return degenerate(b=0.0, s=1.0, l=l, rho=rho)


class TestSimulatePath:
    def test_frozen_dynamics(self):
        cfg = SimConfig(horizon=1.0, dt=0.1, n_paths=1, radius=10.0, seed=1)
        p = simulate_path(degenerate(), ConstantControl(0.0), 1.0, cfg)
        assert np.all(p.states == 1.0)
        assert p.exit_index is None

    def test_deterministic_euler(self):
        cfg = SimConfig(horizon=1.0, dt=0.1, n_paths=1, radius=10.0, seed=1)
        p = simulate_path(degenerate(b=1.0), ConstantControl(0.0), 1.0, cfg)
        assert p.states[0] == 1.0
        assert p.states[5] == pytest.approx(1.5, abs=1e-12)
        assert p.states[-1] == pytest.approx(2.0, abs=1e-12)

    def test_brownian_variance(self):
        cfg = SimConfig(horizon=1.0, dt=0.01, n_paths=100_000, radius=1e6, seed=3)
        from hjblab.sim import snapshot_moments

        snaps, _ = snapshot_moments(brownian(), ConstantControl(0.0), 0.0, cfg, [1.0])
        var = snaps[:, 0].var(ddof=1)
        se = var * math.sqrt(2.0 / (cfg.n_paths - 1))
        assert abs(var - 1.0) <= 3 * se

    def test_controls_recorded_and_admissible(self):
        prob = builtin_problem("advertising-default")
        cfg = SimConfig(horizon=0.5, dt=0.01, n_paths=1, radius=12.0, seed=5,
                        tail_tol=INF)
        sched = ScheduleControl(times=(0.0, 0.25), values=(0.2, 0.8))
        p = simulate_path(prob, sched, 0.5, cfg)
        assert np.all(p.controls[:25] == 0.2)
        assert np.all(p.controls[25:] == 0.8)

    def test_overflow_raises_simulation_error(self):
        from hjblab.errors import SimulationError

        blow = degenerate(b=0.0, s=0.0)
        blow = ControlProblem(
            drift=CoefficientPair(poly([0.0, 1e4]), constant(0.0)),
            diffusion=CoefficientPair(constant(0.0), constant(0.0)),
            cost=CoefficientPair(constant(0.0), constant(0.0)),
            rho=0.5,
            control_set=ControlSet.interval(0.0, 1.0),
            metadata=ProblemMetadata(0.0, INF, 0.0, 0.0, 1e-300, 0.0),
        )
        cfg = SimConfig(horizon=100.0, dt=1.0, n_paths=1, radius=INF, seed=1)
        with pytest.raises(SimulationError) as exc:
            simulate_path(blow, ConstantControl(0.0), 1.0, cfg)
        assert exc.value.step >= 0

    def test_invalid_control_rejected(self):
        prob = builtin_problem("advertising-default")
        cfg = SimConfig(horizon=1.0, dt=0.1, n_paths=1, radius=12.0, seed=1,
                        tail_tol=INF)
        with pytest.raises(InvalidControlError):
            simulate_path(prob, ConstantControl(2.0), 0.0, cfg)


class TestExitTime:
    def test_bounded_path_returns_horizon(self):
        cfg = SimConfig(horizon=1.0, dt=0.1, n_paths=1, radius=10.0, seed=1)
        p = simulate_path(degenerate(), ConstantControl(0.0), 0.5, cfg)
        assert exit_time(p, 5.0) == pytest.approx(1.0)

    def test_unit_speed_crossing(self):
        # y_k = 0.1 k: first strict exceedance of R=1 is at t = 1.1.
        cfg = SimConfig(horizon=2.0, dt=0.1, n_paths=1, radius=100.0, seed=1)
        p = simulate_path(degenerate(b=1.0), ConstantControl(0.0), 0.0, cfg)
        assert exit_time(p, 1.0) == pytest.approx(1.1, abs=1e-9)

    def test_brownian_mean_exit_small_scale(self):
        # E[tau] = R^2 for |W| leaving (-R, R) from 0; desk-size version of
        # the full-scale acceptance run.
        cfg = SimConfig(horizon=8.0, dt=2e-5, n_paths=4000, radius=1.0, seed=9)
        from hjblab import _kernels

        plan = _kernels.build_plan(brownian(), 0.0, cfg.dt, cfg.n_steps, 1.0,
                                   cfg.seed, n_paths=cfg.n_paths,
                                   schedule_u=np.zeros(cfg.n_steps))
        out = _kernels.run_paths(plan)
        taus = np.where(out["exit_idx"] >= 0, out["exit_idx"], cfg.n_steps) * cfg.dt
        se = taus.std(ddof=1) / math.sqrt(cfg.n_paths)
        assert abs(taus.mean() - 1.0) <= 3 * se + 2 * 0.5826 * math.sqrt(cfg.dt)

    def test_exit_requires_positive_radius(self):
        cfg = SimConfig(horizon=1.0, dt=0.1, n_paths=1, radius=10.0, seed=1)
        p = simulate_path(degenerate(), ConstantControl(0.0), 0.5, cfg)
        with pytest.raises(ConfigurationError):
            exit_time(p, 0.0)

    def test_cost_stops_at_exit(self):
        # Deterministic drift crosses R=1 at t=1.1; with l = 1 the cost is the
        # discounted sum over exactly the pre-exit steps.
        prob = degenerate(b=1.0, l=1.0, rho=0.5)
        cfg = SimConfig(horizon=2.0, dt=0.1, n_paths=4, radius=1.0, seed=1,
                        tail_tol=INF)
        est = estimate_cost(prob, ConstantControl(0.0), 0.0, cfg)
        ks = np.arange(11)  # steps 0..10 accrue; y_11 is the first outside
        expected = float(np.sum(np.exp(-0.5 * ks * 0.1)) * 0.1)
        assert est.mean == pytest.approx(expected, rel=1e-12)
        assert est.se == 0.0


class TestEstimateCost:
    def test_unit_cost_quadrature_bias_bound(self):
        # Left-rule error on the convex decreasing integrand e^{-rho s} is
        # bounded by (rho dt / 2) relative to the estimate, plus the tail:
        # |J_hat - 1/rho| <= (rho dt / 2) J_hat + tail, deterministically.
        prob = degenerate(l=1.0, rho=0.5)
        cfg = SimConfig(horizon=40.0, dt=0.01, n_paths=3, radius=INF, seed=1)
        est = estimate_cost(prob, ConstantControl(0.0), 0.0, cfg)
        bound = (prob.rho * cfg.dt / 2) * est.mean + prob.tail_bound(cfg.horizon)
        assert abs(est.mean - 2.0) <= bound + 1e-12
        assert est.se == 0.0

    def test_zero_cost(self):
        est = estimate_cost(brownian(l=0.0), ConstantControl(0.0), 0.0,
                            SimConfig(horizon=1.0, dt=0.01, n_paths=100,
                                      radius=1e6, seed=2))
        assert est.mean == 0.0 and est.se == 0.0

    def test_se_scaling(self):
        # Quadrupling the path count halves the SE (within 20%).
        prob = builtin_problem("advertising-default")
        base = dict(horizon=20.0, dt=5e-3, radius=12.0, seed=7)
        grid = build_grid(-13, 13, 401)
        from hjblab.solver import solve_hjb

        pol = solve_hjb(prob, grid, prob.control_set.grid(9)).policy
        e1 = estimate_cost(prob, pol, 0.5, SimConfig(n_paths=2000, **base))
        e2 = estimate_cost(prob, pol, 0.5, SimConfig(n_paths=8000, **base))
        assert e2.se == pytest.approx(e1.se / 2, rel=0.2)

    def test_reported_interval(self):
        prob = degenerate(l=1.0, rho=0.5)
        cfg = SimConfig(horizon=40.0, dt=0.01, n_paths=3, radius=INF, seed=1)
        est = estimate_cost(prob, ConstantControl(0.0), 0.0, cfg)
        lo, hi = est.interval()
        assert lo <= est.mean <= hi
        assert hi - est.mean == pytest.approx(2 * est.se + est.tail_bound)

    def test_tail_rule_enforced_for_bounded_cost(self):
        prob = degenerate(l=1.0, rho=0.5)
        cfg = SimConfig(horizon=1.0, dt=0.01, n_paths=10, radius=INF, seed=1,
                        tail_tol=1e-4)
        with pytest.raises(ConfigurationError):
            estimate_cost(prob, ConstantControl(0.0), 0.0, cfg)

    def test_unbounded_cost_reports_unbounded_tail(self):
        prob = builtin_problem("ou-quadratic")
        cfg = SimConfig(horizon=2.0, dt=0.01, n_paths=50, radius=1e6, seed=1)
        est = estimate_cost(prob, ConstantControl(0.0), 0.0, cfg)
        assert est.tail_bound == INF
        assert est.to_dict()["tail_bound"] is None


class TestReproducibility:
    def test_bit_identical_repeat(self):
        prob = builtin_problem("advertising-default")
        cfg = SimConfig(horizon=2.0, dt=0.01, n_paths=500, radius=12.0, seed=77,
                        tail_tol=INF)
        a = estimate_cost(prob, ConstantControl(0.3), 0.5, cfg)
        b = estimate_cost(prob, ConstantControl(0.3), 0.5, cfg)
        assert a.mean == b.mean and a.se == b.se

    def test_single_path_matches_batch_member(self):
        # Streams are keyed by absolute path index: path 17 of a batch equals
        # the standalone simulation with path_index=17.
        prob = builtin_problem("advertising-default")
        cfg = SimConfig(horizon=1.0, dt=0.01, n_paths=32, radius=12.0, seed=5,
                        tail_tol=INF)
        from hjblab import _kernels
        from hjblab.sim import _control_plan_args

        plan = _kernels.build_plan(prob, 0.5, cfg.dt, cfg.n_steps, cfg.radius,
                                   cfg.seed, n_paths=32, want_full=True,
                                   **_control_plan_args(prob, ConstantControl(0.3), cfg))
        out = _kernels.run_paths(plan)
        single = simulate_path(prob, ConstantControl(0.3), 0.5, cfg, path_index=17)
        assert np.array_equal(single.states, out["ys"][17])

    def test_batch_split_invariance(self):
        # Two half-batches with path offsets reproduce the full batch:
        # scheduling and batching cannot change the estimate.
        prob = builtin_problem("advertising-default")
        cfg = SimConfig(horizon=1.0, dt=0.01, n_paths=64, radius=12.0, seed=5,
                        tail_tol=INF)
        from hjblab import _kernels
        from hjblab.sim import _control_plan_args

        args = _control_plan_args(prob, ConstantControl(0.3), cfg)
        full = _kernels.run_paths(_kernels.build_plan(
            prob, 0.5, cfg.dt, cfg.n_steps, cfg.radius, cfg.seed, n_paths=64, **args))
        lo = _kernels.run_paths(_kernels.build_plan(
            prob, 0.5, cfg.dt, cfg.n_steps, cfg.radius, cfg.seed, n_paths=32,
            path0=0, **args))
        hi = _kernels.run_paths(_kernels.build_plan(
            prob, 0.5, cfg.dt, cfg.n_steps, cfg.radius, cfg.seed, n_paths=32,
            path0=32, **args))
        assert np.array_equal(full["cost"], np.concatenate([lo["cost"], hi["cost"]]))

    def test_null_set_avoidance(self):
        # Simulated states never land exactly on a declared breakpoint.
        prob = builtin_problem("advertising-default")
        cfg = SimConfig(horizon=2.0, dt=2e-4, n_paths=100, radius=12.0, seed=21,
                        tail_tol=INF)
        hits = 0
        total = 0
        for i in range(100):
            p = simulate_path(prob, ConstantControl(0.4), 0.75, cfg, path_index=i)
            for bp in prob.breakpoints():
                hits += int(np.count_nonzero(p.states == bp))
            total += p.states.shape[0]
        assert total >= 10**6
        assert hits == 0


class TestDynkin:
    def test_constant_field_telescopes(self):
        # v = c: the statistic reduces to quadrature error of order rho dt.
        prob = brownian()
        grid = build_grid(-6, 6, 201)
        vf = ValueField(grid, np.full(201, 3.0))
        cfg = SimConfig(horizon=1.0, dt=1e-3, n_paths=200, radius=5.0, seed=3)
        r = dynkin_residual(prob, vf, ConstantControl(0.0), 0.0, cfg, t=1.0)
        assert abs(r.residual) <= 3.0 * prob.rho * cfg.dt

    def test_quadratic_field_identity(self):
        # v = x^2, b = 0, sigma = 1: d/dt E[e^{-rho t}(x0^2+t)] matches the
        # generator integrand identically, so the statistic is pure noise.
        prob = brownian()
        grid = build_grid(-6, 6, 2001)
        vf = ValueField(grid, grid.nodes() ** 2)
        cfg = SimConfig(horizon=1.0, dt=1e-3, n_paths=20_000, radius=5.0, seed=11)
        r = dynkin_residual(prob, vf, ConstantControl(0.0), 0.0, cfg, t=1.0)
        assert abs(r.residual) <= 3 * r.se
        assert r.passed

    def test_narrow_grid_rejected(self):
        prob = brownian()
        grid = build_grid(-2, 2, 101)
        vf = ValueField(grid, np.zeros(101))
        cfg = SimConfig(horizon=1.0, dt=0.01, n_paths=10, radius=5.0, seed=1)
        with pytest.raises(ConfigurationError):
            dynkin_residual(prob, vf, ConstantControl(0.0), 0.0, cfg, t=1.0)

    def test_time_beyond_horizon_rejected(self):
        prob = brownian()
        grid = build_grid(-6, 6, 101)
        vf = ValueField(grid, np.zeros(101))
        cfg = SimConfig(horizon=1.0, dt=0.01, n_paths=10, radius=5.0, seed=1)
        with pytest.raises(ConfigurationError):
            dynkin_residual(prob, vf, ConstantControl(0.0), 0.0, cfg, t=2.0)


class TestMoments:
    def test_frozen_dynamics_moment(self):
        cfg = SimConfig(horizon=1.0, dt=0.01, n_paths=50, radius=INF, seed=1)
        rep = moment_check(degenerate(), ConstantControl(0.0), 2.0, cfg, power=2.0)
        assert rep.applicable
        assert all(e == pytest.approx(4.0) for e in rep.estimates)
        assert rep.passed

    def test_brownian_second_moment(self):
        cfg = SimConfig(horizon=4.0, dt=0.01, n_paths=20_000, radius=INF, seed=2)
        rep = moment_check(brownian(), ConstantControl(0.0), 1.0, cfg, power=2.0)
        # E|y(t)|^2 = x0^2 + t
        for t, est, se in zip(rep.times, rep.estimates, rep.ses):
            assert est == pytest.approx(1.0 + t, abs=4 * se)
        assert rep.passed

    def test_unbounded_coefficients_not_applicable(self):
        prob = ControlProblem(
            drift=CoefficientPair(poly([0.0, -1.0]), constant(0.0)),
            diffusion=CoefficientPair(constant(1.0), constant(0.0)),
            cost=CoefficientPair(constant(0.0), constant(0.0)),
            rho=1.0,
            control_set=ControlSet.finite([0.0]),
            metadata=ProblemMetadata(1.0, INF, 1.0, 0.0, 1e-300, 0.0),
        )
        cfg = SimConfig(horizon=1.0, dt=0.01, n_paths=10, radius=INF, seed=1)
        rep = moment_check(prob, ConstantControl(0.0), 0.0, cfg)
        assert not rep.applicable and not rep.passed


class TestConfigsAndControls:
    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            SimConfig(horizon=1.0, dt=0.0, n_paths=1, radius=1.0, seed=1)
        with pytest.raises(ConfigurationError):
            SimConfig(horizon=0.05, dt=0.1, n_paths=1, radius=1.0, seed=1)
        with pytest.raises(ConfigurationError):
            SimConfig(horizon=1.0, dt=0.1, n_paths=0, radius=1.0, seed=1)
        with pytest.raises(ConfigurationError):
            SimConfig(horizon=1.0, dt=0.1, n_paths=1, radius=-1.0, seed=1)
        with pytest.raises(ConfigurationError):
            SimConfig(horizon=1.05, dt=0.1, n_paths=1, radius=1.0, seed=1)

    def test_schedule_validation(self):
        with pytest.raises(ConfigurationError):
            ScheduleControl(times=(0.5,), values=(0.1,))
        with pytest.raises(ConfigurationError):
            ScheduleControl(times=(0.0, 0.5), values=(0.1,))

    def test_random_schedule_reproducible_and_admissible(self):
        prob = builtin_problem("advertising-default")
        cfg = SimConfig(horizon=2.0, dt=0.01, n_paths=4, radius=12.0, seed=42,
                        tail_tol=INF)
        cg = prob.control_set.grid(9)
        a = random_schedule(cg, cfg, 3)
        b = random_schedule(cg, cfg, 3)
        assert a == b
        assert all(v in cg.points for v in a.values)
        c = random_schedule(cg, cfg, 4)
        assert a.values != c.values
