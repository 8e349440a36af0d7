import numpy as np
import pytest

from hjblab.coeffs import constant
from hjblab.fields import ValueField, build_grid
from hjblab.problems import (
    CoefficientPair,
    ControlProblem,
    ControlSet,
    builtin_problem,
)
from hjblab.sim import ConstantControl, SimConfig, simulate_path
from hjblab.solver import solve_hjb
from hjblab.verify import (
    check_lower_bound,
    check_necessary,
    check_optimality,
    check_transversality,
    default_challengers,
    run_verification,
    uniqueness_cross_check,
)

INF = float("inf")


@pytest.fixture(scope="module")
def adv_setup():
    prob = builtin_problem("advertising-default")
    grid = build_grid(-13, 13, 801)
    cg = prob.control_set.grid(15)
    res = solve_hjb(prob, grid, cg)
    cfg = SimConfig(horizon=20.0, dt=5e-3, n_paths=1500, radius=12.0, seed=99)
    return prob, grid, cg, res, cfg


class TestTransversality:
    def test_zero_field_passes(self):
        prob = builtin_problem("constant-unit-cost")
        grid = build_grid(-2, 2, 41)
        vf = ValueField(grid, np.zeros(41))
        cfg = SimConfig(horizon=30.0, dt=0.1, n_paths=10, radius=40.0, seed=1)
        e = check_transversality(prob, vf, ConstantControl(0.0), 0.0, cfg)
        assert e.passed and e.measured == 0.0

    def test_analytic_shortcut(self, adv_setup):
        prob, grid, cg, res, cfg = adv_setup
        e = check_transversality(prob, res.value, res.policy, 0.5, cfg)
        assert e.passed
        assert e.details["method"] == "analytic"

    def test_statistical_path(self, adv_setup):
        prob, grid, cg, res, cfg = adv_setup
        e = check_transversality(prob, res.value, res.policy, 0.5, cfg,
                                 allow_shortcut=False)
        assert e.details["method"] == "monte-carlo"
        assert e.passed
        seq = e.details["sequence"]
        assert seq[0] >= seq[1] >= seq[2]


class TestLowerBound:
    def test_feedback_challenger_near_zero_slack(self, adv_setup):
        prob, grid, cg, res, cfg = adv_setup
        entries = check_lower_bound(prob, res.value, [res.policy], 0.5, cfg)
        assert len(entries) == 1
        assert entries[0].passed
        # slack |v - J(psi)| is small, not just <= tolerance
        assert abs(entries[0].measured) < 0.1

    def test_state_independent_cost_all_equal(self):
        # l = 1 independent of (x, u): every control costs 1/rho.
        prob = builtin_problem("constant-unit-cost")
        grid = build_grid(-2, 2, 101)
        cg = prob.control_set.grid(5)
        res = solve_hjb(prob, grid, cg)
        cfg = SimConfig(horizon=30.0, dt=0.01, n_paths=300, radius=50.0, seed=3)
        entries = check_lower_bound(
            prob, res.value, default_challengers(prob, cg, cfg), 0.0, cfg)
        for e in entries:
            assert e.passed
            assert abs(e.measured) < 0.02  # slack ~ quadrature bias only

    def test_max_spend_has_positive_slack(self, adv_setup):
        prob, grid, cg, res, cfg = adv_setup
        entries = check_lower_bound(prob, res.value, [ConstantControl(1.0)], 0.5, cfg)
        assert entries[0].passed
        # strictly suboptimal: J - v visibly positive (reported informationally)
        assert entries[0].measured < -0.5


class TestOptimality:
    def test_trivial_problem_exact(self):
        prob = builtin_problem("constant-unit-cost")
        grid = build_grid(-2, 2, 101)
        cg = prob.control_set.grid(3)
        res = solve_hjb(prob, grid, cg)
        cfg = SimConfig(horizon=30.0, dt=0.01, n_paths=100, radius=50.0, seed=5)
        entries = check_optimality(prob, res.value, res.policy, 0.0, cfg,
                                   control_grid=cg)
        agg = entries[-1]
        assert agg.condition == "optimality[x0=0]"
        assert agg.passed

    def test_ou_oracle(self):
        prob = builtin_problem("ou-quadratic")
        grid = build_grid(-6, 6, 2001)
        cg = prob.control_set.grid(1)
        res = solve_hjb(prob, grid, cg)
        cfg = SimConfig(horizon=12.0, dt=2e-3, n_paths=4000, radius=5.9, seed=7)
        entries = check_optimality(prob, res.value, res.policy, 1.0, cfg,
                                   control_grid=cg, scheme_tol=0.02)
        match = entries[0]
        assert match.passed
        # J_hat also matches the closed form v(1) = 1.0
        assert match.details["j_hat"] == pytest.approx(1.0, abs=0.05)

    def test_pass_implies_lower_bound_pass(self, adv_setup):
        prob, grid, cg, res, cfg = adv_setup
        entries = check_optimality(prob, res.value, res.policy, 0.5, cfg,
                                   control_grid=cg)
        agg = entries[-1]
        lb = [e for e in entries if e.condition.startswith("lower_bound")]
        if agg.passed:
            assert all(e.passed for e in lb)

    def test_corrupted_value_rejected(self, adv_setup):
        # Negative control: shifting v by 0.1 ||l||/rho must break the match.
        prob, grid, cg, res, cfg = adv_setup
        shift = 0.1 * prob.cost_scale
        entries = check_optimality(prob, res.value.shifted(shift), res.policy,
                                   0.5, cfg, control_grid=cg)
        assert not entries[0].passed
        assert not entries[-1].passed


class TestNecessary:
    def test_feedback_path_zero_violations(self, adv_setup):
        prob, grid, cg, res, cfg = adv_setup
        path = simulate_path(prob, res.policy, 0.5, cfg, path_index=0)
        e = check_necessary(prob, res.value, path, cg)
        assert e.passed
        assert e.measured == 0.0

    def test_max_spend_flagged(self, adv_setup):
        prob, grid, cg, res, cfg = adv_setup
        path = simulate_path(prob, ConstantControl(1.0), 0.5, cfg, path_index=0)
        e = check_necessary(prob, res.value, path, cg)
        assert not e.passed
        assert e.measured > 0.5

    def test_singleton_control_always_passes(self):
        prob = builtin_problem("ou-quadratic")
        grid = build_grid(-6, 6, 401)
        cg = prob.control_set.grid(1)
        res = solve_hjb(prob, grid, cg)
        cfg = SimConfig(horizon=2.0, dt=0.01, n_paths=4, radius=5.0, seed=2)
        path = simulate_path(prob, ConstantControl(0.0), 0.0, cfg, path_index=1)
        e = check_necessary(prob, res.value, path, cg)
        assert e.passed and e.measured == 0.0


class TestUniqueness:
    def test_constant_problem_machine_identical(self):
        prob = builtin_problem("constant-unit-cost")
        grid = build_grid(-2, 2, 101)
        e = uniqueness_cross_check(prob, grid, prob.control_set.grid(5))
        assert e.passed
        assert e.measured < 1e-12

    def test_ou(self):
        prob = builtin_problem("ou-quadratic")
        grid = build_grid(-6, 6, 801)
        e = uniqueness_cross_check(prob, grid, prob.control_set.grid(1))
        assert e.passed

    def test_advertising(self, adv_setup):
        prob, grid, cg, res, cfg = adv_setup
        e = uniqueness_cross_check(prob, grid, cg)
        assert e.passed
        assert e.details["refine_gap"] <= e.details["refine_tol"]


class TestPipeline:
    def test_full_report_and_recomputability(self, adv_setup):
        prob, grid, cg, res, cfg = adv_setup
        r1, _ = run_verification(prob, grid, cg, cfg, [0.5], solve_result=res)
        r2, _ = run_verification(prob, grid, cg, cfg, [0.5], solve_result=res)
        assert r1.overall
        d1, d2 = r1.to_dict(), r2.to_dict()
        assert d1 == d2  # bit-identical measured values on identical inputs
        conditions = [e.condition for e in r1.entries]
        assert conditions[0] == "uniqueness_cross_check"
        assert any(c.startswith("transversality") for c in conditions)
        assert any(c.startswith("stopped_identity") for c in conditions)
        assert any(c.startswith("moment_bound") for c in conditions)
        assert any(c.startswith("argmin_along_path") for c in conditions)

    def test_corruption_fails_pipeline(self, adv_setup):
        prob, grid, cg, res, cfg = adv_setup
        report, _ = run_verification(prob, grid, cg, cfg, [0.5],
                                     solve_result=res,
                                     corrupt_value=0.1 * prob.cost_scale)
        assert not report.overall
        assert not report.entry("optimality[x0=0.5]").passed

    def test_entries_carry_finite_measurements(self, adv_setup):
        prob, grid, cg, res, cfg = adv_setup
        report, _ = run_verification(prob, grid, cg, cfg, [1.0], solve_result=res)
        for e in report.entries:
            assert np.isfinite(e.measured), e.condition
