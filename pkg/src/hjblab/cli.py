"""Command-line front end: solve / simulate / verify / demo-advertising.

Exit codes: 0 success (and overall pass for verify), 1 input or configuration
error (the message names the offending field), 2 non-convergence or a failed
verification verdict.
"""

from __future__ import annotations

import os
import sys
from typing import Tuple

import click
import numpy as np

from .artifacts import write_json, write_paths_csv, write_value_csv
from .errors import HJBLabError
from .fields import build_grid
from .problems import BUILTIN_NAMES, ControlProblem, load_problem
from .sim import ConstantControl, SimConfig, estimate_cost, simulate_path
from .solver import hjb_residual_field, solve_hjb
from .verify import run_verification

# Central defaults (documented in the README defaults table).
DEFAULTS = {
    "grid": "-13:13:2001",
    "verify_grid_n": 8001,
    "controls": 41,
    "paths": 20000,
    "dt": 1e-3,
    "horizon": 20.0,
    "radius": 12.0,
    "seed": 20240901,
    "demo_x0": (0.0, 0.25, 0.5, 1.0, 1.5),
    "widen_factor": 1.5,
}


def _parse_grid(spec: str) -> Tuple[float, float, int]:
    parts = spec.split(":")
    if len(parts) != 3:
        raise click.BadParameter("expected LO:HI:N")
    try:
        return float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise click.BadParameter(str(exc))


def _run_config_dict(problem_name, grid, k, cfg) -> dict:
    # The output directory is deliberately not embedded: artifacts must be
    # byte-identical across runs that differ only in destination.
    return {
        "problem": problem_name,
        "grid": {"x_lo": grid.x_lo, "x_hi": grid.x_hi, "n": grid.n},
        "controls": k,
        "sim": {
            "horizon": cfg.horizon,
            "dt": cfg.dt,
            "paths": cfg.n_paths,
            "radius": cfg.radius,
            "seed": cfg.seed,
            "tail_tol": cfg.tail_tol,
        },
    }


def _common_options(f):
    f = click.option("--problem", "problem_src", default="advertising-default",
                     show_default=True,
                     help=f"problem JSON file or builtin ({', '.join(BUILTIN_NAMES)})")(f)
    f = click.option("--grid", "grid_spec", default=DEFAULTS["grid"], show_default=True,
                     help="spatial grid LO:HI:N")(f)
    f = click.option("--controls", "-K", default=DEFAULTS["controls"], show_default=True,
                     help="control grid size K")(f)
    f = click.option("--paths", "-M", default=DEFAULTS["paths"], show_default=True,
                     help="Monte Carlo path count")(f)
    f = click.option("--dt", default=DEFAULTS["dt"], show_default=True)(f)
    f = click.option("--horizon", "-T", default=DEFAULTS["horizon"], show_default=True)(f)
    f = click.option("--radius", "-R", default=DEFAULTS["radius"], show_default=True,
                     help="exit radius for the stopping time")(f)
    f = click.option("--seed", default=DEFAULTS["seed"], show_default=True)(f)
    f = click.option("--tail-tol", default=1e-4, show_default=True,
                     help="acceptance bar for the deterministic truncation tail")(f)
    f = click.option("--out", "out_dir", default="out", show_default=True,
                     help="output directory")(f)
    return f


@click.group()
def main():
    """Solver and verifier for discounted stochastic control on the line."""


def _load(problem_src: str) -> ControlProblem:
    return load_problem(problem_src)


@main.command("solve")
@_common_options
def cmd_solve(problem_src, grid_spec, controls, paths, dt, horizon, radius, seed, tail_tol, out_dir):
    """Solve the dynamic-programming equation and write value/policy artifacts."""
    try:
        problem = _load(problem_src)
        lo, hi, n = _parse_grid(grid_spec)
        grid = build_grid(lo, hi, n)
        control_grid = problem.control_set.grid(controls)
        result = solve_hjb(problem, grid, control_grid)
        residual = hjb_residual_field(problem, result.value, control_grid)
        cfg = SimConfig(horizon=horizon, dt=dt, n_paths=paths, radius=radius, seed=seed,
                        tail_tol=tail_tol)
        run_cfg = _run_config_dict(problem_src, grid, controls, cfg)
        write_value_csv(os.path.join(out_dir, "value.csv"), problem, result.value,
                        result.policy, control_grid, residual)
        report = result.report.to_dict()
        report["masked_sup_residual"] = residual.masked_sup
        write_json(os.path.join(out_dir, "solve_report.json"),
                   {"run_config": run_cfg, "report": report})
    except HJBLabError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"iterations={result.report.iterations} "
               f"residual={result.report.residual:.3e} "
               f"converged={result.report.converged}")
    sys.exit(0 if result.report.converged else 2)


@main.command("simulate")
@_common_options
@click.option("--control", "control_spec", default="feedback", show_default=True,
              help="'feedback' (solve first) or 'const:U'")
@click.option("--x0", default=0.5, show_default=True, help="initial state")
@click.option("--dump-paths", "dump_paths", default=0, show_default=True,
              help="write the first N simulated paths to paths.csv")
def cmd_simulate(problem_src, grid_spec, controls, paths, dt, horizon, radius, seed,
                 tail_tol, out_dir, control_spec, x0, dump_paths):
    """Estimate the discounted cost of a control from x0."""
    try:
        problem = _load(problem_src)
        lo, hi, n = _parse_grid(grid_spec)
        grid = build_grid(lo, hi, n)
        control_grid = problem.control_set.grid(controls)
        cfg = SimConfig(horizon=horizon, dt=dt, n_paths=paths, radius=radius, seed=seed,
                        tail_tol=tail_tol)
        if control_spec == "feedback":
            result = solve_hjb(problem, grid, control_grid)
            if not result.report.converged:
                click.echo("error: solve did not converge", err=True)
                sys.exit(2)
            control = result.policy
        elif control_spec.startswith("const:"):
            control = ConstantControl(float(control_spec.split(":", 1)[1]))
        else:
            raise click.BadParameter("expected 'feedback' or 'const:U'")
        est = estimate_cost(problem, control, x0, cfg)
        run_cfg = _run_config_dict(problem_src, grid, controls, cfg)
        run_cfg["x0"] = x0
        run_cfg["control"] = control_spec
        write_json(os.path.join(out_dir, "estimate.json"),
                   {"run_config": run_cfg, "estimate": est.to_dict()})
        if dump_paths > 0:
            sample = [simulate_path(problem, control, x0, cfg, path_index=i)
                      for i in range(min(dump_paths, paths))]
            write_paths_csv(os.path.join(out_dir, "paths.csv"), sample, problem)
    except HJBLabError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"J_hat={est.mean:.6f} se={est.se:.2e} tail<={est.tail_bound:.2e}")
    sys.exit(0)


@main.command("verify")
@_common_options
@click.option("--x0", "x0_list", multiple=True, type=float,
              help="initial states (repeatable; default demo set)")
@click.option("--corrupt", "corrupt", default=0.0, show_default=True,
              help="shift the candidate value field (negative-control harness)")
def cmd_verify(problem_src, grid_spec, controls, paths, dt, horizon, radius, seed,
               tail_tol, out_dir, x0_list, corrupt):
    """Solve and certify; exit 0 iff every verification entry passes."""
    try:
        problem = _load(problem_src)
        lo, hi, n = _parse_grid(grid_spec)
        grid = build_grid(lo, hi, n)
        control_grid = problem.control_set.grid(controls)
        cfg = SimConfig(horizon=horizon, dt=dt, n_paths=paths, radius=radius, seed=seed,
                        tail_tol=tail_tol)
        x0s = list(x0_list) if x0_list else list(DEFAULTS["demo_x0"])
        report, result = run_verification(
            problem, grid, control_grid, cfg, x0s, corrupt_value=corrupt
        )
        residual = hjb_residual_field(problem, result.value, control_grid)
        run_cfg = _run_config_dict(problem_src, grid, controls, cfg)
        run_cfg["corrupt"] = corrupt
        write_value_csv(os.path.join(out_dir, "value.csv"), problem, result.value,
                        result.policy, control_grid, residual)
        write_json(os.path.join(out_dir, "verify_report.json"),
                   {"run_config": run_cfg, "report": report.to_dict()})
    except HJBLabError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(report.render_text())
    sys.exit(0 if report.overall else 2)


@main.command("demo-advertising")
@click.option("--paths", "-M", default=DEFAULTS["paths"], show_default=True)
@click.option("--dt", default=DEFAULTS["dt"], show_default=True)
@click.option("--seed", default=DEFAULTS["seed"], show_default=True)
@click.option("--out", "out_dir", default="out-demo", show_default=True)
@click.option("--grid-n", default=DEFAULTS["verify_grid_n"], show_default=True)
def cmd_demo_advertising(paths, dt, seed, out_dir, grid_n):
    """End-to-end goodwill demo: solve, synthesize, simulate, verify.

    Also re-solves on a x1.5 wider box and reports the truncation
    sensitivity on the base nodes.
    """
    try:
        problem = _load("advertising-default")
        lo, hi, _ = _parse_grid(DEFAULTS["grid"])
        grid = build_grid(lo, hi, grid_n)
        control_grid = problem.control_set.grid(DEFAULTS["controls"])
        cfg = SimConfig(horizon=DEFAULTS["horizon"], dt=dt, n_paths=paths,
                        radius=DEFAULTS["radius"], seed=seed)
        x0s = list(DEFAULTS["demo_x0"])
        report, result = run_verification(problem, grid, control_grid, cfg, x0s)

        wide = grid.widen(DEFAULTS["widen_factor"])
        wide_result = solve_hjb(problem, wide, control_grid)
        box_delta = float(np.max(np.abs(
            wide_result.value.interpolate(grid.nodes()) - result.value.values
        )))

        residual = hjb_residual_field(problem, result.value, control_grid)
        run_cfg = _run_config_dict("advertising-default", grid,
                                   DEFAULTS["controls"], cfg)
        write_value_csv(os.path.join(out_dir, "value.csv"), problem, result.value,
                        result.policy, control_grid, residual)
        write_json(os.path.join(out_dir, "verify_report.json"),
                   {"run_config": run_cfg, "report": report.to_dict()})
        write_json(os.path.join(out_dir, "demo_report.json"), {
            "run_config": run_cfg,
            "box_widen_factor": DEFAULTS["widen_factor"],
            "box_delta_sup": box_delta,
            "solve": result.report.to_dict(),
        })
    except HJBLabError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)

    click.echo(f"{'x0':>6} {'v(x0)':>12} {'J_hat(psi)':>12} {'slack':>12}")
    for x0 in x0s:
        e = report.entry(f"feedback_cost_matches_value[x0={x0:g}]")
        v0 = e.details["v0"]
        j = e.details["j_hat"]
        click.echo(f"{x0:>6g} {v0:>12.6f} {j:>12.6f} {j - v0:>12.6f}")
    click.echo(f"wider-box sup delta: {box_delta:.3e}")
    click.echo(f"verification: {'PASS' if report.overall else 'FAIL'}")
    sys.exit(0 if report.overall else 2)


if __name__ == "__main__":
    main()
