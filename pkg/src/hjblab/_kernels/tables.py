"""Flattening of problems and controls into plain arrays for the path engine.

Both the compiled kernel and the pure-Python fallback consume the same plan
dictionary, so everything order- or rounding-sensitive (discount table,
control-part values, policy tables) is computed exactly once here.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..coeffs import CoefficientExpr
from ..fields import FeedbackPolicy, ValueField
from ..problems import ControlProblem

__all__ = ["coeff_table", "build_plan", "alloc_out"]


def coeff_table(expr: CoefficientExpr) -> dict:
    return {
        "breaks": np.asarray(expr.breaks, dtype=float),
        "coeffs": np.ascontiguousarray(expr.coeff_matrix()),
        "lo": np.asarray(expr.piece_lo, dtype=float),
        "hi": np.asarray(expr.piece_hi, dtype=float),
    }


_EMPTY = np.zeros(0, dtype=float)
_EMPTY_I = np.zeros(0, dtype=np.int64)


def build_plan(
    problem: ControlProblem,
    x0: float,
    dt: float,
    n_steps: int,
    radius: float,
    seed: int,
    n_paths: int,
    path0: int = 0,
    policy: Optional[FeedbackPolicy] = None,
    schedule_u: Optional[np.ndarray] = None,
    snapshot_steps: Optional[np.ndarray] = None,
    field: Optional[ValueField] = None,
    field_stop_step: Optional[int] = None,
    want_full: bool = False,
) -> dict:
    if (policy is None) == (schedule_u is None):
        raise ValueError("exactly one of policy/schedule_u is required")
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    plan = {
        "n_paths": int(n_paths),
        "path0": int(path0),
        "key0": seed & 0xFFFFFFFF,
        "key1": seed >> 32,
        "x0": float(x0),
        "dt": float(dt),
        "sqrt_dt": math.sqrt(float(dt)),
        "n_steps": int(n_steps),
        "radius": float(radius),
        "rho": problem.rho,
        "disc": np.exp(-problem.rho * float(dt) * np.arange(int(n_steps) + 1)),
        "want_full": 1 if want_full else 0,
    }
    for name, pair in (("b", problem.drift), ("s", problem.diffusion), ("l", problem.cost)):
        tab = coeff_table(pair.state)
        plan[f"{name}_breaks"] = tab["breaks"]
        plan[f"{name}_coeffs"] = tab["coeffs"]
        plan[f"{name}_lo"] = tab["lo"]
        plan[f"{name}_hi"] = tab["hi"]

    if policy is not None:
        u_nodes = policy.control_values()
        plan.update(
            ctrl_kind=0,
            pol_lo=policy.grid.x_lo,
            pol_h=policy.grid.h,
            pol_n=policy.grid.n,
            pol_u=u_nodes,
            pol_bc=np.asarray(problem.drift.control(u_nodes), dtype=float),
            pol_sc=np.asarray(problem.diffusion.control(u_nodes), dtype=float),
            pol_lc=np.asarray(problem.cost.control(u_nodes), dtype=float),
            sch_u=_EMPTY, sch_bc=_EMPTY, sch_sc=_EMPTY, sch_lc=_EMPTY,
        )
    else:
        schedule_u = np.asarray(schedule_u, dtype=float)
        if schedule_u.shape != (int(n_steps),):
            raise ValueError("schedule must provide one control per step")
        plan.update(
            ctrl_kind=1,
            pol_lo=0.0, pol_h=1.0, pol_n=1,
            pol_u=_EMPTY, pol_bc=_EMPTY, pol_sc=_EMPTY, pol_lc=_EMPTY,
            sch_u=schedule_u,
            sch_bc=np.asarray(problem.drift.control(schedule_u), dtype=float),
            sch_sc=np.asarray(problem.diffusion.control(schedule_u), dtype=float),
            sch_lc=np.asarray(problem.cost.control(schedule_u), dtype=float),
        )

    if snapshot_steps is None:
        plan["snap_steps"] = _EMPTY_I
    else:
        snap = np.asarray(snapshot_steps, dtype=np.int64)
        if snap.size and (np.any(np.diff(snap) <= 0) or snap[0] < 0 or snap[-1] > n_steps):
            raise ValueError("snapshot steps must be sorted, unique, within [0, n_steps]")
        plan["snap_steps"] = snap

    if field is not None:
        if field_stop_step is None or not (0 <= field_stop_step <= n_steps):
            raise ValueError("field mode requires a stop step within the horizon")
        plan.update(
            field_mode=1,
            f_lo=field.grid.x_lo,
            f_h=field.grid.h,
            f_n=field.grid.n,
            fv=field.values,
            fdv=field.derivative(),
            fd2v=field.second_derivative(),
            n_t=int(field_stop_step),
        )
    else:
        plan.update(field_mode=0, f_lo=0.0, f_h=1.0, f_n=2,
                    fv=np.zeros(2), fdv=np.zeros(2), fd2v=np.zeros(2),
                    n_t=int(n_steps))
    return plan


def alloc_out(plan: dict) -> dict:
    m, n = plan["n_paths"], plan["n_steps"]
    out = {
        "cost": np.zeros(m),
        "exit_idx": np.full(m, -1, dtype=np.int64),
        "err_idx": np.full(m, -1, dtype=np.int64),
        "y_snap": np.zeros((m, plan["snap_steps"].shape[0])),
        "dyn_stat": np.zeros(m if plan["field_mode"] else 0),
    }
    if plan["want_full"]:
        out["ys"] = np.zeros((m, n + 1))
        out["us"] = np.zeros((m, n))
        out["dws"] = np.zeros((m, n))
    else:
        out["ys"] = np.zeros((0, 0))
        out["us"] = np.zeros((0, 0))
        out["dws"] = np.zeros((0, 0))
    return out
