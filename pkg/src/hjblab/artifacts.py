"""Deterministic CSV/JSON artifact writers.

All numbers are formatted with %.17g (full round-trip precision) and JSON
keys are sorted, so runs with identical inputs produce byte-identical files.
"""

from __future__ import annotations

import json
import math
import os
from typing import Optional, Sequence

import numpy as np

from .fields import FeedbackPolicy, ValueField
from .problems import ControlGrid, ControlProblem
from .sim import SamplePath
from .solver import ResidualDiagnostics

__all__ = ["write_json", "write_value_csv", "write_paths_csv", "fmt"]


def fmt(x: float) -> str:
    return "%.17g" % float(x)


def write_json(path: str, obj: dict):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def write_value_csv(
    path: str,
    problem: ControlProblem,
    value: ValueField,
    policy: FeedbackPolicy,
    control_grid: ControlGrid,
    residual: Optional[ResidualDiagnostics] = None,
):
    """Solve output: one row per node, columns x,v,dv,d2v,psi_index,psi_u,residual.

    The residual column holds the masked pointwise equation residual; masked
    nodes (boundary, breakpoint-adjacent) print as nan.
    """
    x = value.grid.nodes()
    dv = value.derivative()
    d2v = value.second_derivative()
    psi_u = policy.control_values()
    res = np.full(value.grid.n, math.nan)
    if residual is not None:
        res[residual.valid] = residual.residual[residual.valid]
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        fh.write("x,v,dv,d2v,psi_index,psi_u,residual\n")
        for i in range(value.grid.n):
            fh.write(
                f"{fmt(x[i])},{fmt(value.values[i])},{fmt(dv[i])},{fmt(d2v[i])},"
                f"{int(policy.indices[i])},{fmt(psi_u[i])},{fmt(res[i])}\n"
            )


def write_paths_csv(path: str, paths: Sequence[SamplePath], problem: ControlProblem):
    """Simulation dump: path,k,t,y,u,discounted_l (one row per executed step)."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        fh.write("path,k,t,y,u,discounted_l\n")
        for sp in paths:
            for k in range(sp.controls.shape[0]):
                t = k * sp.dt
                y = sp.states[k]
                u = sp.controls[k]
                dl = math.exp(-problem.rho * t) * float(
                    problem.eval_cost(float(y), float(u))
                )
                fh.write(
                    f"{sp.path_index},{k},{fmt(t)},{fmt(y)},{fmt(u)},{fmt(dl)}\n"
                )
