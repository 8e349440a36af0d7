"""Pure-Python path engine: the readable reference for the compiled kernel.

Each path is advanced with scalar Python floats (IEEE doubles) in exactly the
operation order of the compiled kernel, so the two backends produce
bit-identical output; the test suite asserts this.  Brownian increments come
from the counter-based streams in :mod:`hjblab.rng` and tail-branch logs go
through ``math.log`` (the platform libm, shared with the C side).

Per-path semantics, with y_k the state before step k and n the step count:

* exit index = first k (including 0) with |y_k| > R; an exited path stops
  accruing everything and its state freezes.
* cost = dt * sum_{k < min(exit, n)} e^{-rho k dt} l(y_k, u_k).
* snapshots record y at the requested step indices (state frozen at exit).
* field mode accumulates the generator functional used by the expected-value
  identity for e^{-rho t} v(y(t)) stopped at tau:
      stat = e^{-rho (t ^ tau)} v(y(t ^ tau))
             - dt * sum_{k < stop} e^{-rho k dt} [-rho v + b Dv + s^2/2 D2v](y_k)
  with v, Dv, D2v linearly interpolated from a grid field.
"""

from __future__ import annotations

import math

import numpy as np

from ..rng import _acklam_scalar, raw_pairs

_TWO_NEG_52 = 2.0 ** -52

BACKEND = "python"


def _coeff_eval(breaks, coeffs, los, his, deg, x):
    j = 0
    nb = len(breaks)
    while j < nb and x >= breaks[j]:
        j += 1
    row = coeffs[j]
    acc = row[deg]
    for d in range(deg - 1, -1, -1):
        acc = acc * x + row[d]
    if acc < los[j]:
        acc = los[j]
    if acc > his[j]:
        acc = his[j]
    return acc


def _interp(lo, h, n, vals, x):
    t = (x - lo) / h
    j = math.floor(t)
    if j < 0:
        j = 0
        frac = 0.0
    elif j >= n - 1:
        j = n - 2
        frac = 1.0
    else:
        frac = t - j
    return vals[j] + frac * (vals[j + 1] - vals[j])


def run(plan: dict, out: dict) -> None:
    n = plan["n_steps"]
    m = plan["n_paths"]
    dt = plan["dt"]
    sqrt_dt = plan["sqrt_dt"]
    radius = plan["radius"]
    rho = plan["rho"]
    x0 = plan["x0"]
    disc = plan["disc"].tolist()

    b_breaks = plan["b_breaks"].tolist()
    b_coeffs = plan["b_coeffs"].tolist()
    b_lo = plan["b_lo"].tolist()
    b_hi = plan["b_hi"].tolist()
    b_deg = len(b_coeffs[0]) - 1
    s_breaks = plan["s_breaks"].tolist()
    s_coeffs = plan["s_coeffs"].tolist()
    s_lo = plan["s_lo"].tolist()
    s_hi = plan["s_hi"].tolist()
    s_deg = len(s_coeffs[0]) - 1
    l_breaks = plan["l_breaks"].tolist()
    l_coeffs = plan["l_coeffs"].tolist()
    l_lo = plan["l_lo"].tolist()
    l_hi = plan["l_hi"].tolist()
    l_deg = len(l_coeffs[0]) - 1

    feedback = plan["ctrl_kind"] == 0
    pol_lo, pol_h, pol_n = plan["pol_lo"], plan["pol_h"], plan["pol_n"]
    pol_u = plan["pol_u"].tolist()
    pol_bc = plan["pol_bc"].tolist()
    pol_sc = plan["pol_sc"].tolist()
    pol_lc = plan["pol_lc"].tolist()
    sch_u = plan["sch_u"].tolist()
    sch_bc = plan["sch_bc"].tolist()
    sch_sc = plan["sch_sc"].tolist()
    sch_lc = plan["sch_lc"].tolist()

    snap_steps = plan["snap_steps"].tolist()
    n_snap = len(snap_steps)
    field_mode = plan["field_mode"]
    f_lo, f_h, f_n = plan["f_lo"], plan["f_h"], plan["f_n"]
    fv = plan["fv"].tolist()
    fdv = plan["fdv"].tolist()
    fd2v = plan["fd2v"].tolist()
    n_t = plan["n_t"]
    want_full = plan["want_full"]

    step_range = np.arange(n, dtype=np.uint64)
    for p in range(m):
        # Integer-exact vectorized counter stream; the scalar kernel computes
        # the same blocks one at a time.
        words = raw_pairs(plan["key0"] | (plan["key1"] << 32),
                          plan["path0"] + p, step_range, 0)
        y = x0
        cost = 0.0
        dyn_int = 0.0
        dyn_term = 0.0
        dyn_done = field_mode == 0
        exit_k = -1
        err_k = -1
        snap_ptr = 0
        if want_full:
            out["ys"][p, 0] = y
        for k in range(n):
            if abs(y) > radius:
                exit_k = k
                break
            if snap_ptr < n_snap and k == snap_steps[snap_ptr]:
                out["y_snap"][p, snap_ptr] = y
                snap_ptr += 1
            if not dyn_done and k == n_t:
                dyn_term = disc[n_t] * _interp(f_lo, f_h, f_n, fv, y)
                dyn_done = True
            if feedback:
                i = int(round((y - pol_lo) / pol_h))
                if i < 0:
                    i = 0
                elif i >= pol_n:
                    i = pol_n - 1
                u = pol_u[i]
                b = _coeff_eval(b_breaks, b_coeffs, b_lo, b_hi, b_deg, y) + pol_bc[i]
                s = _coeff_eval(s_breaks, s_coeffs, s_lo, s_hi, s_deg, y) + pol_sc[i]
                l = _coeff_eval(l_breaks, l_coeffs, l_lo, l_hi, l_deg, y) + pol_lc[i]
            else:
                u = sch_u[k]
                b = _coeff_eval(b_breaks, b_coeffs, b_lo, b_hi, b_deg, y) + sch_bc[k]
                s = _coeff_eval(s_breaks, s_coeffs, s_lo, s_hi, s_deg, y) + sch_sc[k]
                l = _coeff_eval(l_breaks, l_coeffs, l_lo, l_hi, l_deg, y) + sch_lc[k]
            cost += disc[k] * l
            if not dyn_done:
                vi = _interp(f_lo, f_h, f_n, fv, y)
                dvi = _interp(f_lo, f_h, f_n, fdv, y)
                d2vi = _interp(f_lo, f_h, f_n, fd2v, y)
                dyn_int += disc[k] * (-rho * vi + b * dvi + 0.5 * s * s * d2vi)
            u52 = (int(words[k]) >> 12) * 1.0 + 0.5
            z = _acklam_scalar(u52 * _TWO_NEG_52)
            dw = z * sqrt_dt
            y = y + b * dt + s * dw
            if want_full:
                out["ys"][p, k + 1] = y
                out["us"][p, k] = u
                out["dws"][p, k] = dw
            if not math.isfinite(y):
                err_k = k
                break
        else:
            if abs(y) > radius:
                exit_k = n
        # Post-loop bookkeeping shared by break/no-break endings: freeze the
        # state into any pending snapshot slots and the pending stop term.
        while snap_ptr < n_snap:
            out["y_snap"][p, snap_ptr] = y
            snap_ptr += 1
        if not dyn_done:
            dyn_term = disc[min(exit_k if exit_k >= 0 else n_t, n_t)] * _interp(
                f_lo, f_h, f_n, fv, y
            )
        if want_full and exit_k >= 0:
            for kk in range(exit_k, n):
                out["ys"][p, kk + 1] = y
        out["cost"][p] = cost * dt
        out["exit_idx"][p] = exit_k
        out["err_idx"][p] = err_k
        if field_mode:
            out["dyn_stat"][p] = dyn_term - dyn_int * dt
