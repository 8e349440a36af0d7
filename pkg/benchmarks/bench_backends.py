"""Compare the compiled path engine against the pure-Python fallback.

Both backends implement identical per-step semantics (verified bit-for-bit
here and in tests/test_backends.py); the point of the compiled core is raw
throughput on the Euler-Maruyama inner loop, which dominates the runtime of
cost estimation and verification.

Run:  python benchmarks/bench_backends.py [--paths 256] [--steps 2000]
"""

import argparse
import time

import numpy as np

from hjblab import _kernels
from hjblab._kernels import backend_module
from hjblab.fields import build_grid
from hjblab.problems import builtin_problem
from hjblab.solver import solve_hjb


def bench(impl, plan, repeats=3):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = _kernels.run_paths(plan, impl=impl)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=256)
    ap.add_argument("--steps", type=int, default=2000)
    args = ap.parse_args()

    prob = builtin_problem("advertising-default")
    grid = build_grid(-13.0, 13.0, 2001)
    res = solve_hjb(prob, grid, prob.control_set.grid(41))
    workloads = {
        "closed-loop feedback": _kernels.build_plan(
            prob, 0.5, 1e-3, args.steps, 12.0, 42, n_paths=args.paths,
            policy=res.policy),
        "open-loop schedule": _kernels.build_plan(
            prob, 0.5, 1e-3, args.steps, 12.0, 42, n_paths=args.paths,
            schedule_u=np.full(args.steps, 0.4)),
        "feedback + field accumulation": _kernels.build_plan(
            prob, 0.5, 1e-3, args.steps, 12.0, 42, n_paths=args.paths,
            policy=res.policy, field=res.value, field_stop_step=args.steps),
    }

    total = args.paths * args.steps
    print(f"workload: {args.paths} paths x {args.steps} steps = {total/1e6:.2f}M steps")
    backends = ["python"]
    try:
        backend_module("compiled")
        backends.append("compiled")
    except ImportError:
        print("compiled kernel not built; benchmarking fallback only")

    for name, plan in workloads.items():
        line = [f"{name:32s}"]
        outs = {}
        times = {}
        for b in backends:
            t, out = bench(backend_module(b), plan)
            times[b] = t
            outs[b] = out
            line.append(f"{b}: {1e9 * t / total:8.1f} ns/step")
        if len(backends) == 2:
            agree = all(
                np.array_equal(outs["python"][k], outs["compiled"][k])
                for k in ("cost", "exit_idx", "y_snap", "dyn_stat")
            )
            line.append(f"speedup x{times['python'] / times['compiled']:.0f}")
            line.append("outputs bit-identical" if agree else "OUTPUT MISMATCH")
        print("  ".join(line))


if __name__ == "__main__":
    main()
