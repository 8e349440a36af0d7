# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled path engine; a line-for-line twin of `fallback.run`.

The per-step semantics, the counter-based stream layout, and the inverse
normal CDF coefficients must stay in lock-step with the pure-Python
implementation: the test suite asserts bit-identical output of the two
backends, which also pins down the accumulation order used here.
"""

from libc.math cimport fabs, floor, isfinite, log, lrint, sqrt
from libc.stdint cimport int64_t, uint32_t, uint64_t


cdef double TWO_NEG_52 = 2.0 ** -52

# Acklam's inverse normal CDF coefficients (see hjblab.rng).
cdef double A0 = -3.969683028665376e+01
cdef double A1 = 2.209460984245205e+02
cdef double A2 = -2.759285104469687e+02
cdef double A3 = 1.383577518672690e+02
cdef double A4 = -3.066479806614716e+01
cdef double A5 = 2.506628277459239e+00
cdef double B0 = -5.447609879822406e+01
cdef double B1 = 1.615858368580409e+02
cdef double B2 = -1.556989798598866e+02
cdef double B3 = 6.680131188771972e+01
cdef double B4 = -1.328068155288572e+01
cdef double C0 = -7.784894002430293e-03
cdef double C1 = -3.223964580411365e-01
cdef double C2 = -2.400758277161838e+00
cdef double C3 = -2.549732539343734e+00
cdef double C4 = 4.374664141464968e+00
cdef double C5 = 2.938163982698783e+00
cdef double D0 = 7.784695709041462e-03
cdef double D1 = 3.224671290700398e-01
cdef double D2 = 2.445134137142996e+00
cdef double D3 = 3.754408661907416e+00
cdef double P_LOW = 0.02425
cdef double P_HIGH = 1.0 - 0.02425


cdef inline double _acklam(double p) noexcept nogil:
    cdef double q, r, num, den
    if p < P_LOW:
        q = sqrt(-2.0 * log(p))
        num = ((((C0 * q + C1) * q + C2) * q + C3) * q + C4) * q + C5
        den = (((D0 * q + D1) * q + D2) * q + D3) * q + 1.0
        return num / den
    if p > P_HIGH:
        q = sqrt(-2.0 * log(1.0 - p))
        num = ((((C0 * q + C1) * q + C2) * q + C3) * q + C4) * q + C5
        den = (((D0 * q + D1) * q + D2) * q + D3) * q + 1.0
        return -(num / den)
    q = p - 0.5
    r = q * q
    num = ((((A0 * r + A1) * r + A2) * r + A3) * r + A4) * r + A5
    den = ((((B0 * r + B1) * r + B2) * r + B3) * r + B4) * r + 1.0
    return num * q / den


cdef inline void _philox_block(uint32_t c0, uint32_t c1, uint32_t c2, uint32_t c3,
                               uint32_t key0, uint32_t key1,
                               uint64_t* w_even, uint64_t* w_odd) noexcept nogil:
    cdef uint64_t p0, p1
    cdef uint32_t hi0, lo0, hi1, lo1, t0, t1, t2, t3
    cdef uint32_t k0 = key0, k1 = key1
    cdef int r
    for r in range(10):
        p0 = (<uint64_t>0xD2511F53u) * c0
        p1 = (<uint64_t>0xCD9E8D57u) * c2
        hi0 = <uint32_t>(p0 >> 32)
        lo0 = <uint32_t>p0
        hi1 = <uint32_t>(p1 >> 32)
        lo1 = <uint32_t>p1
        t0 = hi1 ^ c1 ^ k0
        t1 = lo1
        t2 = hi0 ^ c3 ^ k1
        t3 = lo0
        c0 = t0
        c1 = t1
        c2 = t2
        c3 = t3
        k0 = k0 + 0x9E3779B9u
        k1 = k1 + 0xBB67AE85u
    w_even[0] = (<uint64_t>c0) | ((<uint64_t>c1) << 32)
    w_odd[0] = (<uint64_t>c2) | ((<uint64_t>c3) << 32)


cdef inline double _coeff_eval(const double* breaks, const double* coeffs,
                               const double* lo, const double* hi,
                               int nb, int deg, double x) noexcept nogil:
    cdef int j = 0
    cdef int d
    cdef double acc
    cdef const double* row
    while j < nb and x >= breaks[j]:
        j += 1
    row = coeffs + j * (deg + 1)
    acc = row[deg]
    for d in range(deg - 1, -1, -1):
        acc = acc * x + row[d]
    if acc < lo[j]:
        acc = lo[j]
    if acc > hi[j]:
        acc = hi[j]
    return acc


cdef inline double _interp(double lo, double h, int n, const double* vals,
                           double x) noexcept nogil:
    cdef double t = (x - lo) / h
    cdef long j = <long>floor(t)
    cdef double frac
    if j < 0:
        j = 0
        frac = 0.0
    elif j >= n - 1:
        j = n - 2
        frac = 1.0
    else:
        frac = t - j
    return vals[j] + frac * (vals[j + 1] - vals[j])


cdef inline const double* _ptr(const double[::1] mv) noexcept nogil:
    if mv.shape[0] == 0:
        return NULL
    return &mv[0]


BACKEND = "compiled"


def run(dict plan, dict out):
    cdef int n = plan["n_steps"]
    cdef int m = plan["n_paths"]
    cdef uint64_t path0 = plan["path0"]
    cdef uint32_t key0 = plan["key0"]
    cdef uint32_t key1 = plan["key1"]
    cdef double dt = plan["dt"]
    cdef double sqrt_dt = plan["sqrt_dt"]
    cdef double radius = plan["radius"]
    cdef double rho = plan["rho"]
    cdef double x0 = plan["x0"]

    cdef const double[::1] disc_mv = plan["disc"]
    cdef const double[::1] b_breaks_mv = plan["b_breaks"]
    cdef const double[:, ::1] b_coeffs_mv = plan["b_coeffs"]
    cdef const double[::1] b_lo_mv = plan["b_lo"]
    cdef const double[::1] b_hi_mv = plan["b_hi"]
    cdef const double[::1] s_breaks_mv = plan["s_breaks"]
    cdef const double[:, ::1] s_coeffs_mv = plan["s_coeffs"]
    cdef const double[::1] s_lo_mv = plan["s_lo"]
    cdef const double[::1] s_hi_mv = plan["s_hi"]
    cdef const double[::1] l_breaks_mv = plan["l_breaks"]
    cdef const double[:, ::1] l_coeffs_mv = plan["l_coeffs"]
    cdef const double[::1] l_lo_mv = plan["l_lo"]
    cdef const double[::1] l_hi_mv = plan["l_hi"]

    cdef const double* disc = _ptr(disc_mv)
    cdef const double* b_breaks = _ptr(b_breaks_mv)
    cdef const double* b_coeffs = &b_coeffs_mv[0, 0]
    cdef const double* b_lo = _ptr(b_lo_mv)
    cdef const double* b_hi = _ptr(b_hi_mv)
    cdef int b_nb = b_breaks_mv.shape[0]
    cdef int b_deg = b_coeffs_mv.shape[1] - 1
    cdef const double* s_breaks = _ptr(s_breaks_mv)
    cdef const double* s_coeffs = &s_coeffs_mv[0, 0]
    cdef const double* s_lo = _ptr(s_lo_mv)
    cdef const double* s_hi = _ptr(s_hi_mv)
    cdef int s_nb = s_breaks_mv.shape[0]
    cdef int s_deg = s_coeffs_mv.shape[1] - 1
    cdef const double* l_breaks = _ptr(l_breaks_mv)
    cdef const double* l_coeffs = &l_coeffs_mv[0, 0]
    cdef const double* l_lo = _ptr(l_lo_mv)
    cdef const double* l_hi = _ptr(l_hi_mv)
    cdef int l_nb = l_breaks_mv.shape[0]
    cdef int l_deg = l_coeffs_mv.shape[1] - 1

    cdef bint feedback = plan["ctrl_kind"] == 0
    cdef double pol_lo = plan["pol_lo"]
    cdef double pol_h = plan["pol_h"]
    cdef long pol_n = plan["pol_n"]
    cdef const double[::1] pol_u_mv = plan["pol_u"]
    cdef const double[::1] pol_bc_mv = plan["pol_bc"]
    cdef const double[::1] pol_sc_mv = plan["pol_sc"]
    cdef const double[::1] pol_lc_mv = plan["pol_lc"]
    cdef const double[::1] sch_u_mv = plan["sch_u"]
    cdef const double[::1] sch_bc_mv = plan["sch_bc"]
    cdef const double[::1] sch_sc_mv = plan["sch_sc"]
    cdef const double[::1] sch_lc_mv = plan["sch_lc"]
    cdef const double* pol_u = _ptr(pol_u_mv)
    cdef const double* pol_bc = _ptr(pol_bc_mv)
    cdef const double* pol_sc = _ptr(pol_sc_mv)
    cdef const double* pol_lc = _ptr(pol_lc_mv)
    cdef const double* sch_u = _ptr(sch_u_mv)
    cdef const double* sch_bc = _ptr(sch_bc_mv)
    cdef const double* sch_sc = _ptr(sch_sc_mv)
    cdef const double* sch_lc = _ptr(sch_lc_mv)

    cdef const int64_t[::1] snap_steps_mv = plan["snap_steps"]
    cdef int n_snap = snap_steps_mv.shape[0]
    cdef const int64_t* snap_steps = &snap_steps_mv[0] if n_snap else NULL
    cdef bint field_mode = plan["field_mode"]
    cdef double f_lo = plan["f_lo"]
    cdef double f_h = plan["f_h"]
    cdef int f_n = plan["f_n"]
    cdef const double[::1] fv_mv = plan["fv"]
    cdef const double[::1] fdv_mv = plan["fdv"]
    cdef const double[::1] fd2v_mv = plan["fd2v"]
    cdef const double* fv = _ptr(fv_mv)
    cdef const double* fdv = _ptr(fdv_mv)
    cdef const double* fd2v = _ptr(fd2v_mv)
    cdef int n_t = plan["n_t"]
    cdef bint want_full = plan["want_full"]

    cdef double[::1] out_cost_mv = out["cost"]
    cdef int64_t[::1] out_exit_mv = out["exit_idx"]
    cdef int64_t[::1] out_err_mv = out["err_idx"]
    cdef double[:, ::1] out_snap_mv = out["y_snap"]
    cdef double[::1] out_dyn_mv = out["dyn_stat"]
    cdef double[:, ::1] out_ys_mv = out["ys"]
    cdef double[:, ::1] out_us_mv = out["us"]
    cdef double[:, ::1] out_dws_mv = out["dws"]
    cdef double* out_cost = &out_cost_mv[0] if m else NULL
    cdef int64_t* out_exit = &out_exit_mv[0] if m else NULL
    cdef int64_t* out_err = &out_err_mv[0] if m else NULL
    cdef double* out_snap = &out_snap_mv[0, 0] if n_snap else NULL
    cdef double* out_dyn = &out_dyn_mv[0] if field_mode else NULL
    cdef double* out_ys = &out_ys_mv[0, 0] if want_full else NULL
    cdef double* out_us = &out_us_mv[0, 0] if want_full else NULL
    cdef double* out_dws = &out_dws_mv[0, 0] if want_full else NULL

    cdef int p, k, kk, snap_ptr
    cdef long i
    cdef int64_t exit_k, err_k
    cdef bint dyn_done
    cdef double y, cost, dyn_int, dyn_term, u, b, s, l, vi, dvi, d2vi, z, dw, u52
    cdef uint64_t stream, w, w_even, w_odd
    cdef uint32_t c1w, c2w
    cdef long have_block

    with nogil:
        for p in range(m):
            stream = path0 + <uint64_t>p
            c1w = <uint32_t>stream
            c2w = <uint32_t>(stream >> 32)
            y = x0
            cost = 0.0
            dyn_int = 0.0
            dyn_term = 0.0
            dyn_done = not field_mode
            exit_k = -1
            err_k = -1
            snap_ptr = 0
            have_block = -1
            w_even = 0
            w_odd = 0
            if want_full:
                out_ys[p * (n + 1)] = y
            for k in range(n):
                if fabs(y) > radius:
                    exit_k = k
                    break
                if snap_ptr < n_snap and k == snap_steps[snap_ptr]:
                    out_snap[p * n_snap + snap_ptr] = y
                    snap_ptr += 1
                if (not dyn_done) and k == n_t:
                    dyn_term = disc[n_t] * _interp(f_lo, f_h, f_n, fv, y)
                    dyn_done = True
                if feedback:
                    i = lrint((y - pol_lo) / pol_h)
                    if i < 0:
                        i = 0
                    elif i >= pol_n:
                        i = pol_n - 1
                    u = pol_u[i]
                    b = _coeff_eval(b_breaks, b_coeffs, b_lo, b_hi, b_nb, b_deg, y) + pol_bc[i]
                    s = _coeff_eval(s_breaks, s_coeffs, s_lo, s_hi, s_nb, s_deg, y) + pol_sc[i]
                    l = _coeff_eval(l_breaks, l_coeffs, l_lo, l_hi, l_nb, l_deg, y) + pol_lc[i]
                else:
                    u = sch_u[k]
                    b = _coeff_eval(b_breaks, b_coeffs, b_lo, b_hi, b_nb, b_deg, y) + sch_bc[k]
                    s = _coeff_eval(s_breaks, s_coeffs, s_lo, s_hi, s_nb, s_deg, y) + sch_sc[k]
                    l = _coeff_eval(l_breaks, l_coeffs, l_lo, l_hi, l_nb, l_deg, y) + sch_lc[k]
                cost += disc[k] * l
                if not dyn_done:
                    vi = _interp(f_lo, f_h, f_n, fv, y)
                    dvi = _interp(f_lo, f_h, f_n, fdv, y)
                    d2vi = _interp(f_lo, f_h, f_n, fd2v, y)
                    dyn_int += disc[k] * (-rho * vi + b * dvi + 0.5 * s * s * d2vi)
                if (k >> 1) != have_block:
                    _philox_block(<uint32_t>(k >> 1), c1w, c2w, 0u, key0, key1,
                                  &w_even, &w_odd)
                    have_block = k >> 1
                w = w_even if (k & 1) == 0 else w_odd
                u52 = <double>(w >> 12) + 0.5
                z = _acklam(u52 * TWO_NEG_52)
                dw = z * sqrt_dt
                y = y + b * dt + s * dw
                if want_full:
                    out_ys[p * (n + 1) + k + 1] = y
                    out_us[p * n + k] = u
                    out_dws[p * n + k] = dw
                if not isfinite(y):
                    err_k = k
                    break
            if exit_k < 0 and err_k < 0 and fabs(y) > radius:
                exit_k = n
            while snap_ptr < n_snap:
                out_snap[p * n_snap + snap_ptr] = y
                snap_ptr += 1
            if not dyn_done:
                kk = <int>(exit_k if 0 <= exit_k < n_t else n_t)
                dyn_term = disc[kk] * _interp(f_lo, f_h, f_n, fv, y)
            if want_full and exit_k >= 0:
                for kk in range(<int>exit_k, n):
                    out_ys[p * (n + 1) + kk + 1] = y
            out_cost[p] = cost * dt
            out_exit[p] = exit_k
            out_err[p] = err_k
            if field_mode:
                out_dyn[p] = dyn_term - dyn_int * dt
