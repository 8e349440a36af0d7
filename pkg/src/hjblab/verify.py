"""Numerical certification of a candidate value function and feedback law.

Each check instantiates one condition of the optimality verification
machinery at Monte Carlo scale and reports a measured quantity against an
explicit tolerance:

* transversality  - e^{-rho s} E|v(y(s))| must decay to the tail tolerance;
* lower bound     - v(x0) <= Jhat(x0, u) + 2 SE (+ scheme tolerance) for a
  family of challenger controls, sampling "for every admissible pair";
* optimality      - |Jhat(x0, psi) - v(x0)| <= 2 SE + scheme tolerance and
  the lower bound holds, so v matches the value and psi attains it;
* argmin along paths - the candidate-optimal control must minimize the
  per-control integrand along its own trajectories (necessary condition);
* expected-value identity - the stopped discounted identity for v holds
  within Monte Carlo and discretization error (engine of all of the above);
* uniqueness probe - Howard runs from different starts and control grids
  land on the same fixed point.

All entries are pure functions of (problem, grid, seeds, config); reports
embed that provenance so every number is recomputable bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .errors import ConfigurationError
from .fields import FeedbackPolicy, SpatialGrid, ValueField
from .problems import ControlGrid, ControlProblem
from .sim import (
    ConstantControl,
    Control,
    CostEstimate,
    SimConfig,
    _control_plan_args,
    _mean_se,
    describe_control,
    estimate_cost,
    random_schedule,
    simulate_path,
)
from .solver import SolveResult, solve_hjb

__all__ = [
    "CheckEntry",
    "VerificationReport",
    "default_challengers",
    "check_transversality",
    "check_lower_bound",
    "check_optimality",
    "check_necessary",
    "uniqueness_cross_check",
    "run_verification",
    "default_scheme_tol",
]

DEFAULT_SCHEME_TOL_FACTOR = 5e-3
UNIQUENESS_TOL = 1e-8
NECESSARY_VIOLATION_BUDGET = 0.01


@dataclass
class CheckEntry:
    """One verified condition: measured value against its tolerance."""

    condition: str
    measured: float
    tolerance: float
    passed: bool
    provenance: str
    details: Dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "measured": self.measured,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "provenance": self.provenance,
            "details": self.details,
        }


@dataclass
class VerificationReport:
    entries: List[CheckEntry]
    config: Dict

    @property
    def overall(self) -> bool:
        return all(e.passed for e in self.entries)

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "config": self.config,
            "entries": [e.to_dict() for e in self.entries],
        }

    def entry(self, condition: str) -> CheckEntry:
        for e in self.entries:
            if e.condition == condition:
                return e
        raise KeyError(condition)

    def render_text(self) -> str:
        lines = []
        for e in self.entries:
            status = "PASS" if e.passed else "FAIL"
            lines.append(
                f"[{status}] {e.condition}: measured={e.measured:.6g} "
                f"tol={e.tolerance:.6g} ({e.provenance})"
            )
        lines.append(f"overall: {'PASS' if self.overall else 'FAIL'}")
        return "\n".join(lines)


def default_scheme_tol(problem: ControlProblem) -> float:
    """Default allowance for scheme bias in value/cost comparisons."""
    scale = problem.cost_scale
    if not math.isfinite(scale):
        scale = 1.0
    return DEFAULT_SCHEME_TOL_FACTOR * scale


def default_challengers(
    problem: ControlProblem,
    control_grid: ControlGrid,
    cfg: SimConfig,
    n_constants: int = 5,
    n_random: int = 10,
) -> List[Control]:
    """The fixed challenger family: grid constants plus seeded random schedules."""
    pts = control_grid.as_array()
    idx = np.unique(np.round(np.linspace(0, len(pts) - 1, n_constants)).astype(int))
    challengers: List[Control] = [ConstantControl(float(pts[i])) for i in idx]
    for j in range(n_random):
        challengers.append(random_schedule(control_grid, cfg, j))
    return challengers


# ----------------------------------------------------------------------
# individual checks
# ----------------------------------------------------------------------
def check_transversality(
    problem: ControlProblem,
    value: ValueField,
    control: Control,
    x0: float,
    cfg: SimConfig,
    allow_shortcut: bool = True,
) -> CheckEntry:
    """Decay of e^{-rho s} E|v(y(s))| at s in {T/2, 3T/4, T}.

    When the field bound alone already certifies the decay
    (e^{-rho T} sup|v| <= tail tolerance) the entry short-circuits without
    simulation; pass ``allow_shortcut=False`` to force the statistical test.
    """
    bound = math.exp(-problem.rho * cfg.horizon) * value.sup_abs()
    if allow_shortcut and bound <= cfg.tail_tol:
        return CheckEntry(
            condition=f"transversality[x0={x0:g}]",
            measured=bound,
            tolerance=cfg.tail_tol,
            passed=True,
            provenance="analytic bound e^(-rho T) sup|v|",
            details={"method": "analytic"},
        )
    times = [cfg.horizon / 2, 3 * cfg.horizon / 4, cfg.horizon]
    snaps, _ = _snapshot_run(problem, control, x0, cfg, times)
    seq, ses = [], []
    for j, s in enumerate(times):
        vals = np.abs(value.interpolate(snaps[:, j]))
        m, se = _mean_se(vals)
        seq.append(math.exp(-problem.rho * s) * m)
        ses.append(math.exp(-problem.rho * s) * se)
    decreasing = all(seq[j + 1] <= seq[j] * (1 + 1e-9) for j in range(len(seq) - 1))
    last_ok = seq[-1] <= cfg.tail_tol + 3.0 * ses[-1]
    return CheckEntry(
        condition=f"transversality[x0={x0:g}]",
        measured=seq[-1],
        tolerance=cfg.tail_tol + 3.0 * ses[-1],
        passed=bool(decreasing and last_ok),
        provenance="discounted expected |v| decay along paths",
        details={"method": "monte-carlo", "sequence": seq, "ses": ses},
    )


def _snapshot_run(problem, control, x0, cfg, times):
    cfg.validate_for(problem)
    steps = [cfg.step_of(t) for t in times]
    plan = _kernels.build_plan(
        problem, x0, cfg.dt, cfg.n_steps, cfg.radius, cfg.seed,
        n_paths=cfg.n_paths, snapshot_steps=np.asarray(steps, dtype=np.int64),
        **_control_plan_args(problem, control, cfg),
    )
    out = _kernels.run_paths(plan)
    return out["y_snap"], out


def lower_bound_entry(
    v0: float, estimate: CostEstimate, label: str, x0: float, scheme_tol: float
) -> CheckEntry:
    """Decision logic of one lower-bound comparison (pure function)."""
    slack = v0 - estimate.mean
    tol = 2.0 * estimate.se + scheme_tol
    return CheckEntry(
        condition=f"lower_bound[x0={x0:g}, challenger={label}]",
        measured=slack,
        tolerance=tol,
        passed=bool(slack <= tol),
        provenance="v <= J(x0, u) for every admissible control",
        details={"j_hat": estimate.mean, "se": estimate.se, "v0": v0},
    )


def check_lower_bound(
    problem: ControlProblem,
    value: ValueField,
    challengers: Sequence[Control],
    x0: float,
    cfg: SimConfig,
    scheme_tol: Optional[float] = None,
) -> List[CheckEntry]:
    """Assert v(x0) <= Jhat(x0, u) + 2 SE + scheme tolerance per challenger."""
    if scheme_tol is None:
        scheme_tol = default_scheme_tol(problem)
    v0 = float(value.interpolate(x0))
    entries = []
    for ch in challengers:
        est = estimate_cost(problem, ch, x0, cfg)
        entries.append(lower_bound_entry(v0, est, describe_control(ch), x0, scheme_tol))
    return entries


def optimality_entry(
    v0: float, estimate: CostEstimate, x0: float, scheme_tol: float
) -> CheckEntry:
    """Decision logic of the two-sided value match (pure function)."""
    gap = abs(estimate.mean - v0)
    tol = 2.0 * estimate.se + scheme_tol
    return CheckEntry(
        condition=f"feedback_cost_matches_value[x0={x0:g}]",
        measured=gap,
        tolerance=tol,
        passed=bool(gap <= tol),
        provenance="argmin feedback attains the value",
        details={"j_hat": estimate.mean, "se": estimate.se, "v0": v0},
    )


def check_optimality(
    problem: ControlProblem,
    value: ValueField,
    feedback: FeedbackPolicy,
    x0: float,
    cfg: SimConfig,
    challengers: Optional[Sequence[Control]] = None,
    control_grid: Optional[ControlGrid] = None,
    scheme_tol: Optional[float] = None,
) -> List[CheckEntry]:
    """Two-sided certificate at x0: feedback cost matches v and v lower-bounds
    every challenger.  Returns the match entry, the lower-bound entries, and
    an aggregate entry whose pass flag is their conjunction."""
    if scheme_tol is None:
        scheme_tol = default_scheme_tol(problem)
    if challengers is None:
        if control_grid is None:
            raise ConfigurationError("need challengers or a control grid to build them")
        challengers = default_challengers(problem, control_grid, cfg)
    v0 = float(value.interpolate(x0))
    est = estimate_cost(problem, feedback, x0, cfg)
    match = optimality_entry(v0, est, x0, scheme_tol)
    lb = check_lower_bound(problem, value, challengers, x0, cfg, scheme_tol)
    agg = CheckEntry(
        condition=f"optimality[x0={x0:g}]",
        measured=match.measured,
        tolerance=match.tolerance,
        passed=bool(match.passed and all(e.passed for e in lb)),
        provenance="sufficient optimality (value match + lower bounds)",
        details={"n_challengers": len(lb)},
    )
    return [match, *lb, agg]


def check_necessary(
    problem: ControlProblem,
    value: ValueField,
    path,
    control_grid: ControlGrid,
    slack: Optional[float] = None,
) -> CheckEntry:
    """Along-path argmin condition for a candidate-optimal control.

    States are snapped to their nearest grid node and the control in force is
    compared to the best grid control at the node's central-difference
    derivatives.  The per-step slack defaults to the upwind-vs-central
    discrepancy bound h |b|_inf (1 + |D2v|), the discretization allowance
    separating the synthesized argmin from the equation-level one; steps
    within one spacing of a declared breakpoint are excluded and up to a 1%
    violating fraction is tolerated.
    """
    grid = value.grid
    x = grid.nodes()
    dv = value.derivative()
    d2v = value.second_derivative()
    y = path.states[:-1]
    u = path.controls
    idx = np.clip(np.rint((y - grid.x_lo) / grid.h).astype(np.int64), 0, grid.n - 1)
    keep = np.ones(y.shape, dtype=bool)
    for bp in problem.breakpoints():
        keep &= np.abs(y - bp) > grid.h
    keep &= (idx > 0) & (idx < grid.n - 1)
    if not np.any(keep):
        return CheckEntry(
            condition="argmin_along_path",
            measured=0.0,
            tolerance=NECESSARY_VIOLATION_BUDGET,
            passed=True,
            provenance="necessary argmin condition (no testable steps)",
            details={"steps": 0},
        )
    xi = x[idx[keep]]
    pi = dv[idx[keep]]
    zi = d2v[idx[keep]]
    h_best, _ = problem.hamiltonian_min_many(xi, pi, zi, control_grid)
    h_used = np.empty_like(h_best)
    uu = u[keep]
    for val in np.unique(uu):
        sel = uu == val
        h_used[sel] = problem.hamiltonian_cv(xi[sel], pi[sel], zi[sel], float(val))
    if slack is None:
        drift_bound = problem.metadata.drift_bound
        if not math.isfinite(drift_bound):
            drift_bound = 1.0
        tol = grid.h * drift_bound * (1.0 + np.abs(zi)) + 1e-9 * (1.0 + np.abs(h_best))
    else:
        tol = slack + 1e-9 * (1.0 + np.abs(h_best))
    frac = float(np.mean(h_used > h_best + tol))
    return CheckEntry(
        condition="argmin_along_path",
        measured=frac,
        tolerance=NECESSARY_VIOLATION_BUDGET,
        passed=bool(frac <= NECESSARY_VIOLATION_BUDGET),
        provenance="necessary argmin condition along the optimal path",
        details={"steps": int(np.count_nonzero(keep))},
    )


def uniqueness_cross_check(
    problem: ControlProblem,
    grid: SpatialGrid,
    control_grid: ControlGrid,
    refine_tol: Optional[float] = None,
    max_iter: int = 200,
    tol: float = 1e-9,
) -> CheckEntry:
    """Fixed-point uniqueness probe: two starts and a refined control grid.

    Howard runs started from zero and from the bound-saturating constant must
    agree to ``UNIQUENESS_TOL``; refining the control grid from K to 2K-1
    points may move the value by at most ``refine_tol``.
    """
    if refine_tol is None:
        scale = problem.cost_scale
        refine_tol = 1e-3 * (scale if math.isfinite(scale) else 1.0)
    start_hi = problem.cost_scale
    if not math.isfinite(start_hi):
        start_hi = 1.0
    r_zero = solve_hjb(problem, grid, control_grid, max_iter=max_iter, tol=tol)
    r_high = solve_hjb(problem, grid, control_grid, max_iter=max_iter, tol=tol,
                       init_value=start_hi)
    if not (r_zero.report.converged and r_high.report.converged):
        raise ConfigurationError("uniqueness probe: Howard iteration did not converge")
    init_gap = float(np.max(np.abs(r_zero.value.values - r_high.value.values)))
    refined = solve_hjb(problem, grid, control_grid.refine(), max_iter=max_iter, tol=tol)
    refine_gap = float(np.max(np.abs(r_zero.value.values - refined.value.values)))
    passed = init_gap <= UNIQUENESS_TOL and refine_gap <= refine_tol
    return CheckEntry(
        condition="uniqueness_cross_check",
        measured=init_gap,
        tolerance=UNIQUENESS_TOL,
        passed=bool(passed),
        provenance="unique fixed point across starts and control grids",
        details={"refine_gap": refine_gap, "refine_tol": refine_tol},
    )


# ----------------------------------------------------------------------
# the full pipeline
# ----------------------------------------------------------------------
def run_verification(
    problem: ControlProblem,
    grid: SpatialGrid,
    control_grid: ControlGrid,
    cfg: SimConfig,
    x0_list: Sequence[float],
    scheme_tol: Optional[float] = None,
    dynkin_t: Optional[float] = None,
    moment_power: float = 2.0,
    corrupt_value: float = 0.0,
    solve_result: Optional[SolveResult] = None,
    include_necessary: bool = True,
) -> Tuple[VerificationReport, SolveResult]:
    """Solve, synthesize, and certify at each initial state.

    Per x0, one closed-loop kernel run supplies the feedback cost estimate,
    the transversality/moment snapshots, and the stopped-identity statistic;
    challenger costs are separate runs.  ``corrupt_value`` shifts the
    candidate field after solving (negative-control harness: a nonzero shift
    must make the optimality entries fail).
    """
    if scheme_tol is None:
        scheme_tol = default_scheme_tol(problem)
    if solve_result is None:
        solve_result = solve_hjb(problem, grid, control_grid)
    if not solve_result.report.converged:
        raise ConfigurationError("verification requires a converged solve")
    value = solve_result.value
    if corrupt_value:
        value = value.shifted(corrupt_value)
    policy = solve_result.policy
    cfg.validate_for(problem)
    if dynkin_t is None:
        dynkin_t = min(2.0, cfg.horizon)

    entries: List[CheckEntry] = [
        uniqueness_cross_check(problem, grid, control_grid)
    ]
    challengers = default_challengers(problem, control_grid, cfg)
    for x0 in x0_list:
        v0 = float(value.interpolate(x0))
        snaps, out = _combined_run(problem, policy, value, x0, cfg, dynkin_t)
        est = CostEstimate(
            *(_mean_se(out["cost"])), n_paths=cfg.n_paths,
            horizon=cfg.horizon, dt=cfg.dt, tail_bound=problem.tail_bound(cfg.horizon),
        )
        entries.append(_transversality_from_snaps(problem, value, x0, cfg, snaps))
        match = optimality_entry(v0, est, x0, scheme_tol)
        lb = check_lower_bound(problem, value, challengers, x0, cfg, scheme_tol=scheme_tol)
        entries.append(match)
        entries.extend(lb)
        entries.append(
            CheckEntry(
                condition=f"optimality[x0={x0:g}]",
                measured=match.measured,
                tolerance=match.tolerance,
                passed=bool(match.passed and all(e.passed for e in lb)),
                provenance="sufficient optimality (value match + lower bounds)",
                details={"n_challengers": len(lb)},
            )
        )
        dyn_stats = out["dyn_stat"] - v0
        dyn_mean, dyn_se = _mean_se(dyn_stats)
        dyn_allow = _dynkin_allowance(problem, value, cfg)
        entries.append(
            CheckEntry(
                condition=f"stopped_identity[x0={x0:g}]",
                measured=dyn_mean,
                tolerance=3.0 * dyn_se + dyn_allow,
                passed=bool(abs(dyn_mean) <= 3.0 * dyn_se + dyn_allow),
                provenance="expected-value identity for the stopped discounted field",
                details={"se": dyn_se, "t": dynkin_t},
            )
        )
        entries.append(_moment_entry_from_snaps(problem, x0, cfg, snaps, moment_power))
        if include_necessary:
            path = simulate_path(problem, policy, x0, cfg, path_index=0)
            nec = check_necessary(problem, value, path, control_grid)
            nec.condition = f"argmin_along_path[x0={x0:g}]"
            entries.append(nec)

    config = {
        "x0_list": [float(x) for x in x0_list],
        "grid": {"x_lo": grid.x_lo, "x_hi": grid.x_hi, "n": grid.n},
        "control_grid_size": len(control_grid),
        "sim": {
            "horizon": cfg.horizon,
            "dt": cfg.dt,
            "n_paths": cfg.n_paths,
            "radius": cfg.radius,
            "seed": cfg.seed,
            "tail_tol": cfg.tail_tol,
        },
        "scheme_tol": scheme_tol,
        "dynkin_t": dynkin_t,
        "corrupt_value": corrupt_value,
        "challengers": [describe_control(c) for c in challengers],
    }
    return VerificationReport(entries=entries, config=config), solve_result


def _combined_run(problem, policy, value, x0, cfg, dynkin_t):
    """One closed-loop kernel run feeding several checks."""
    if value.grid.x_lo > -cfg.radius or value.grid.x_hi < cfg.radius:
        raise ConfigurationError(
            f"value grid [{value.grid.x_lo}, {value.grid.x_hi}] too narrow for "
            f"radius {cfg.radius}"
        )
    n = cfg.n_steps
    times = sorted({max(1, n // 4), max(1, n // 2), max(1, (3 * n) // 4), n})
    plan = _kernels.build_plan(
        problem, x0, cfg.dt, n, cfg.radius, cfg.seed,
        n_paths=cfg.n_paths, policy=policy,
        snapshot_steps=np.asarray(times, dtype=np.int64),
        field=value, field_stop_step=cfg.step_of(dynkin_t),
    )
    out = _kernels.run_paths(plan)
    return out["y_snap"], out


def _transversality_from_snaps(problem, value, x0, cfg, snaps) -> CheckEntry:
    bound = math.exp(-problem.rho * cfg.horizon) * value.sup_abs()
    if bound <= cfg.tail_tol:
        return CheckEntry(
            condition=f"transversality[x0={x0:g}]",
            measured=bound,
            tolerance=cfg.tail_tol,
            passed=True,
            provenance="analytic bound e^(-rho T) sup|v|",
            details={"method": "analytic"},
        )
    n = cfg.n_steps
    steps = sorted({max(1, n // 4), max(1, n // 2), max(1, (3 * n) // 4), n})
    tail_steps = steps[-3:] if len(steps) >= 3 else steps
    start = len(steps) - len(tail_steps)
    seq, ses = [], []
    for j, k in enumerate(tail_steps, start=start):
        s = k * cfg.dt
        m, se = _mean_se(np.abs(value.interpolate(snaps[:, j])))
        seq.append(math.exp(-problem.rho * s) * m)
        ses.append(math.exp(-problem.rho * s) * se)
    decreasing = all(seq[j + 1] <= seq[j] * (1 + 1e-9) for j in range(len(seq) - 1))
    return CheckEntry(
        condition=f"transversality[x0={x0:g}]",
        measured=seq[-1],
        tolerance=cfg.tail_tol + 3.0 * ses[-1],
        passed=bool(decreasing and seq[-1] <= cfg.tail_tol + 3.0 * ses[-1]),
        provenance="discounted expected |v| decay along paths",
        details={"method": "monte-carlo", "sequence": seq},
    )


def _moment_entry_from_snaps(problem, x0, cfg, snaps, power) -> CheckEntry:
    """Moment-growth entry at t in {T/4, T/2, T} from the shared snapshot run."""
    md = problem.metadata
    if not (math.isfinite(md.drift_bound) and math.isfinite(md.diffusion_bound)):
        return CheckEntry(
            condition=f"moment_bound[x0={x0:g}]",
            measured=float("nan"),
            tolerance=0.0,
            passed=False,
            provenance="state moment growth estimate (not applicable)",
            details={"applicable": False},
        )
    n = cfg.n_steps
    steps = sorted({max(1, n // 4), max(1, n // 2), max(1, (3 * n) // 4), n})
    wanted = [max(1, n // 4), max(1, n // 2), n]
    c_hat = (1.0 + md.drift_bound + md.diffusion_bound * math.sqrt(power)) ** power
    times, ests, bounds = [], [], []
    for k in wanted:
        j = steps.index(k)
        t = k * cfg.dt
        m, _ = _mean_se(np.abs(snaps[:, j]) ** power)
        times.append(t)
        ests.append(m)
        bounds.append(c_hat * (1.0 + t) ** power * (1.0 + abs(x0) ** power))
    worst = max(e - b for e, b in zip(ests, bounds))
    return CheckEntry(
        condition=f"moment_bound[x0={x0:g}]",
        measured=worst,
        tolerance=0.0,
        passed=bool(worst < 0),
        provenance="state moment growth estimate",
        details={"times": times, "estimates": ests, "bounds": bounds, "power": power},
    )


def _dynkin_allowance(problem, value, cfg) -> float:
    dv = value.derivative()
    d2v = value.second_derivative()
    gen_scale = float(
        problem.rho * value.sup_abs()
        + problem.metadata.drift_bound * np.max(np.abs(dv))
        + 0.5 * problem.metadata.diffusion_bound ** 2 * np.max(np.abs(d2v))
    )
    return (cfg.dt + value.grid.h) * (1.0 + gen_scale)
