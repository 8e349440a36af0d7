"""Monte Carlo laboratory for the controlled SDE.

Paths follow the Euler--Maruyama recursion y_{k+1} = y_k + b dt + sigma dW
with coefficients evaluated pointwise (discontinuities included) and Brownian
increments drawn from counter-based streams keyed by (seed, path, step), so
every estimate is a pure function of its inputs regardless of scheduling or
batching.  The infinite-horizon cost is truncated at the configured horizon
with the discarded tail bounded deterministically by e^{-rho T} sup|l| / rho;
paths are stopped at the first grid time they leave the ball of radius R.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from . import _kernels
from .errors import ConfigurationError, InvalidControlError
from .fields import FeedbackPolicy, ValueField
from .problems import ControlGrid, ControlProblem
from .rng import DOMAIN_CHALLENGERS, raw_pairs

__all__ = [
    "SimConfig",
    "SamplePath",
    "CostEstimate",
    "ConstantControl",
    "ScheduleControl",
    "Control",
    "simulate_path",
    "exit_time",
    "estimate_cost",
    "dynkin_residual",
    "DynkinResult",
    "moment_check",
    "MomentReport",
    "random_schedule",
]


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo run configuration.

    ``tail_tol`` is the acceptance bar for the deterministic truncation tail;
    :meth:`validate_for` enforces it for bounded-cost problems (the rule
    cannot bind at bare construction since it needs the problem's bounds).
    """

    horizon: float
    dt: float
    n_paths: int
    radius: float
    seed: int
    tail_tol: float = 1e-4

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigurationError("dt must be positive")
        if self.horizon < self.dt:
            raise ConfigurationError("horizon must be at least dt")
        if self.n_paths < 1:
            raise ConfigurationError("need at least one path")
        if self.radius <= 0:
            raise ConfigurationError("exit radius must be positive")
        n = self.n_steps
        if abs(n * self.dt - self.horizon) > 1e-9 * max(1.0, self.horizon):
            raise ConfigurationError("horizon must be an integer number of steps")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def validate_for(self, problem: ControlProblem):
        tail = problem.tail_bound(self.horizon)
        if problem.metadata.cost_is_bounded and tail > self.tail_tol:
            raise ConfigurationError(
                f"truncation tail {tail:.3e} exceeds tolerance {self.tail_tol:.1e}; "
                f"increase the horizon"
            )

    def step_of(self, t: float) -> int:
        k = int(round(t / self.dt))
        if abs(k * self.dt - t) > 1e-9 * max(1.0, abs(t)) or not (0 <= k <= self.n_steps):
            raise ConfigurationError(f"time {t} is not on the step grid")
        return k


@dataclass(frozen=True)
class ConstantControl:
    """Open-loop constant control u(t) = value."""

    value: float

    def describe(self) -> str:
        return f"constant[u={self.value:g}]"


@dataclass(frozen=True)
class ScheduleControl:
    """Open-loop piecewise-constant control: values[j] on [times[j], times[j+1])."""

    times: Tuple[float, ...]
    values: Tuple[float, ...]
    label: str = ""

    def __post_init__(self):
        if len(self.times) != len(self.values):
            raise ConfigurationError("schedule needs one value per switch time")
        if len(self.times) == 0 or self.times[0] != 0.0:
            raise ConfigurationError("schedule must start at t = 0")
        if list(self.times) != sorted(set(self.times)):
            raise ConfigurationError("switch times must strictly increase")

    def describe(self) -> str:
        return self.label or f"schedule[{len(self.times)} segments]"


Control = Union[ConstantControl, ScheduleControl, FeedbackPolicy]


def _control_plan_args(problem: ControlProblem, control: Control, cfg: SimConfig) -> dict:
    if isinstance(control, FeedbackPolicy):
        return {"policy": control}
    n = cfg.n_steps
    if isinstance(control, ConstantControl):
        u = np.full(n, float(control.value))
    elif isinstance(control, ScheduleControl):
        t = np.arange(n) * cfg.dt
        idx = np.searchsorted(np.asarray(control.times), t, side="right") - 1
        u = np.asarray(control.values, dtype=float)[idx]
    else:
        raise ConfigurationError(f"unsupported control {control!r}")
    if not problem.control_set.contains(u):
        raise InvalidControlError(f"{control!r} leaves the control set")
    return {"schedule_u": u}


def describe_control(control: Control) -> str:
    if isinstance(control, FeedbackPolicy):
        return "feedback"
    return control.describe()


@dataclass
class SamplePath:
    """One simulated trajectory on the step grid."""

    dt: float
    states: np.ndarray
    controls: np.ndarray
    increments: np.ndarray
    exit_index: Optional[int]
    path_index: int

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.states.shape[0]) * self.dt


@dataclass
class CostEstimate:
    """Monte Carlo estimate of the discounted cost J(x, u(.))."""

    mean: float
    se: float
    n_paths: int
    horizon: float
    dt: float
    tail_bound: float

    def interval(self) -> Tuple[float, float]:
        """mean +/- (2 SE + tail bound); the tail is never folded into the mean."""
        tail = self.tail_bound if math.isfinite(self.tail_bound) else 0.0
        half = 2.0 * self.se + tail
        return self.mean - half, self.mean + half

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "se": self.se,
            "m_paths": self.n_paths,
            "T": self.horizon,
            "dt": self.dt,
            "tail_bound": None if not math.isfinite(self.tail_bound) else self.tail_bound,
        }


def _mean_se(samples: np.ndarray) -> Tuple[float, float]:
    m = float(np.mean(samples))
    if samples.size < 2:
        return m, 0.0
    se = float(np.std(samples, ddof=1) / math.sqrt(samples.size))
    return m, se


def simulate_path(
    problem: ControlProblem,
    control: Control,
    x0: float,
    cfg: SimConfig,
    path_index: int = 0,
) -> SamplePath:
    """Simulate the single path with the given stream index.

    The returned path is identical to member ``path_index`` of any batch run
    with the same seed (streams are keyed by absolute path index).
    """
    cfg.validate_for(problem)
    plan = _kernels.build_plan(
        problem, x0, cfg.dt, cfg.n_steps, cfg.radius, cfg.seed,
        n_paths=1, path0=int(path_index), want_full=True,
        **_control_plan_args(problem, control, cfg),
    )
    out = _kernels.run_paths(plan)
    exit_idx = int(out["exit_idx"][0])
    stop = cfg.n_steps if exit_idx < 0 else exit_idx
    return SamplePath(
        dt=cfg.dt,
        states=out["ys"][0, : stop + 1].copy(),
        controls=out["us"][0, :stop].copy(),
        increments=out["dws"][0, :stop].copy(),
        exit_index=None if exit_idx < 0 else exit_idx,
        path_index=int(path_index),
    )


def exit_time(path: SamplePath, radius: float) -> float:
    """First grid time with |y| > radius, capped at the path horizon."""
    if radius <= 0:
        raise ConfigurationError("exit radius must be positive")
    outside = np.abs(path.states) > radius
    if np.any(outside):
        return float(np.argmax(outside) * path.dt)
    return float((path.states.shape[0] - 1) * path.dt)


def estimate_cost(
    problem: ControlProblem,
    control: Control,
    x0: float,
    cfg: SimConfig,
) -> CostEstimate:
    """Estimate J(x0, control) by left-endpoint quadrature over M paths."""
    cfg.validate_for(problem)
    plan = _kernels.build_plan(
        problem, x0, cfg.dt, cfg.n_steps, cfg.radius, cfg.seed,
        n_paths=cfg.n_paths, **_control_plan_args(problem, control, cfg),
    )
    out = _kernels.run_paths(plan)
    mean, se = _mean_se(out["cost"])
    return CostEstimate(
        mean=mean, se=se, n_paths=cfg.n_paths,
        horizon=cfg.horizon, dt=cfg.dt, tail_bound=problem.tail_bound(cfg.horizon),
    )


@dataclass
class DynkinResult:
    """Monte Carlo defect of the stopped expected-value identity."""

    residual: float
    se: float
    n_paths: int
    t: float
    allowance: float

    @property
    def passed(self) -> bool:
        return abs(self.residual) <= 3.0 * self.se + self.allowance


def dynkin_residual(
    problem: ControlProblem,
    value: ValueField,
    control: Control,
    x0: float,
    cfg: SimConfig,
    t: float,
    radius: Optional[float] = None,
) -> DynkinResult:
    """Estimate E[e^{-rho (t^tau)} v(y(t^tau))] - v(x0) - E int_0^{t^tau} e^{-rho s}(L-rho) v ds.

    v, Dv, D2v are linearly interpolated from the grid field.  The identity
    holds exactly for the true expectation; the returned allowance is a
    first-order budget for time discretization and interpolation bias.
    """
    if t > cfg.horizon:
        raise ConfigurationError("Dynkin time must not exceed the horizon")
    radius = cfg.radius if radius is None else float(radius)
    if value.grid.x_lo > -radius or value.grid.x_hi < radius:
        raise ConfigurationError(
            f"value grid [{value.grid.x_lo}, {value.grid.x_hi}] too narrow for radius {radius}"
        )
    cfg.validate_for(problem)
    n_t = cfg.step_of(t)
    plan = _kernels.build_plan(
        problem, x0, cfg.dt, cfg.n_steps, radius, cfg.seed,
        n_paths=cfg.n_paths, field=value, field_stop_step=n_t,
        **_control_plan_args(problem, control, cfg),
    )
    out = _kernels.run_paths(plan)
    v0 = float(value.interpolate(x0))
    stats = out["dyn_stat"] - v0
    mean, se = _mean_se(stats)
    dv = value.derivative()
    d2v = value.second_derivative()
    gen_scale = float(
        problem.rho * value.sup_abs()
        + problem.metadata.drift_bound * np.max(np.abs(dv))
        + 0.5 * problem.metadata.diffusion_bound ** 2 * np.max(np.abs(d2v))
    )
    allowance = (cfg.dt + value.grid.h) * (1.0 + gen_scale)
    return DynkinResult(residual=mean, se=se, n_paths=cfg.n_paths, t=t, allowance=allowance)


@dataclass
class MomentReport:
    """Sampled state-moment estimates against the a-priori growth bound."""

    power: float
    times: Tuple[float, ...]
    estimates: Tuple[float, ...]
    ses: Tuple[float, ...]
    bounds: Tuple[float, ...]
    applicable: bool

    @property
    def margins(self) -> Tuple[float, ...]:
        return tuple(b - e for b, e in zip(self.bounds, self.estimates))

    @property
    def passed(self) -> bool:
        return self.applicable and all(m > 0 for m in self.margins)


def moment_check(
    problem: ControlProblem,
    control: Control,
    x0: float,
    cfg: SimConfig,
    power: float = 2.0,
) -> MomentReport:
    """Check E|y(t)|^m <= C_hat (1+t)^m (1+|x0|^m) at t in {T/4, T/2, T}.

    C_hat = (1 + |b|_inf + |sigma|_inf sqrt(m))^m is a conservative
    desk-scale surrogate for the constant in the moment estimate; problems
    without declared coefficient bounds are reported not applicable.
    """
    md = problem.metadata
    if not (math.isfinite(md.drift_bound) and math.isfinite(md.diffusion_bound)):
        return MomentReport(power, (), (), (), (), applicable=False)
    cfg.validate_for(problem)
    n = cfg.n_steps
    steps = sorted({max(1, n // 4), max(1, n // 2), n})
    plan = _kernels.build_plan(
        problem, x0, cfg.dt, cfg.n_steps, cfg.radius, cfg.seed,
        n_paths=cfg.n_paths, snapshot_steps=np.asarray(steps, dtype=np.int64),
        **_control_plan_args(problem, control, cfg),
    )
    out = _kernels.run_paths(plan)
    c_hat = (1.0 + md.drift_bound + md.diffusion_bound * math.sqrt(power)) ** power
    times, ests, ses, bounds = [], [], [], []
    for j, k in enumerate(steps):
        t = k * cfg.dt
        samples = np.abs(out["y_snap"][:, j]) ** power
        m, se = _mean_se(samples)
        times.append(t)
        ests.append(m)
        ses.append(se)
        bounds.append(c_hat * (1.0 + t) ** power * (1.0 + abs(x0) ** power))
    return MomentReport(
        power, tuple(times), tuple(ests), tuple(ses), tuple(bounds), applicable=True
    )


def snapshot_moments(
    problem: ControlProblem,
    control: Control,
    x0: float,
    cfg: SimConfig,
    times: Sequence[float],
) -> Tuple[np.ndarray, dict]:
    """States sampled at the given times (kernel snapshot run); shared helper."""
    cfg.validate_for(problem)
    steps = [cfg.step_of(t) for t in times]
    if sorted(set(steps)) != steps:
        raise ConfigurationError("snapshot times must be distinct and increasing")
    plan = _kernels.build_plan(
        problem, x0, cfg.dt, cfg.n_steps, cfg.radius, cfg.seed,
        n_paths=cfg.n_paths, snapshot_steps=np.asarray(steps, dtype=np.int64),
        **_control_plan_args(problem, control, cfg),
    )
    out = _kernels.run_paths(plan)
    return out["y_snap"], out


def random_schedule(
    control_grid: ControlGrid,
    cfg: SimConfig,
    index: int,
    n_segments: int = 8,
) -> ScheduleControl:
    """Seeded random piecewise-constant control (challenger family).

    Levels are control-grid points selected by the challenger stream of the
    master seed, so the family is reproducible and independent of the path
    streams.
    """
    if n_segments < 1:
        raise ConfigurationError("need at least one segment")
    words = raw_pairs(cfg.seed, index, np.arange(n_segments, dtype=np.uint64),
                      DOMAIN_CHALLENGERS)
    levels = control_grid.as_array()[(words % np.uint64(len(control_grid))).astype(np.int64)]
    times = tuple(cfg.horizon * j / n_segments for j in range(n_segments))
    return ScheduleControl(
        times=times,
        values=tuple(float(v) for v in levels),
        label=f"random-schedule[{index}]",
    )
