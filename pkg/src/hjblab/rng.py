"""Counter-based random streams for reproducible, order-independent sampling.

Normal increments are pure functions of (seed, stream, step): a Philox4x32-10
block cipher keyed by the 64-bit seed maps the (step, stream, domain) counter
to 128 output bits, two 53-bit uniforms are carved out of them, and the
inverse normal CDF (Acklam's rational approximation, |rel err| < 1.2e-9)
turns a uniform into a standard normal draw.  The compiled simulation kernel
carries a line-for-line C twin of `_philox_pair` and `inverse_normal_cdf`;
the agreement of the two is asserted bit-for-bit in the test suite.

Domains keep independent consumers on disjoint streams:

    0 - Brownian increments of simulated paths (stream = path index)
    1 - randomized challenger control schedules (stream = challenger index)
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "philox4x32",
    "philox4x32_ref",
    "uniform52",
    "inverse_normal_cdf",
    "normal_stream",
    "uniform_stream",
    "DOMAIN_PATHS",
    "DOMAIN_CHALLENGERS",
]

DOMAIN_PATHS = 0
DOMAIN_CHALLENGERS = 1

_M0 = 0xD2511F53
_M1 = 0xCD9E8D57
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = 0xFFFFFFFF

# Acklam's inverse normal CDF coefficients.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425
_P_HIGH = 1.0 - _P_LOW

_TWO_NEG_52 = 2.0 ** -52


def philox4x32_ref(ctr, key):
    """Reference Philox4x32-10 on Python integers (oracle for the fast paths)."""
    c0, c1, c2, c3 = (int(c) & _MASK32 for c in ctr)
    k0, k1 = (int(k) & _MASK32 for k in key)
    for _ in range(10):
        p0 = (_M0 * c0) & 0xFFFFFFFFFFFFFFFF
        p1 = (_M1 * c2) & 0xFFFFFFFFFFFFFFFF
        hi0, lo0 = p0 >> 32, p0 & _MASK32
        hi1, lo1 = p1 >> 32, p1 & _MASK32
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = (k0 + _W0) & _MASK32
        k1 = (k1 + _W1) & _MASK32
    return c0, c1, c2, c3


def philox4x32(ctr: np.ndarray, key: np.ndarray) -> np.ndarray:
    """Vectorized Philox4x32-10: ctr shape (4, n), key shape (2,) -> (4, n)."""
    c0, c1, c2, c3 = (ctr[i].astype(np.uint64) for i in range(4))
    k0 = np.uint64(int(key[0]) & _MASK32)
    k1 = np.uint64(int(key[1]) & _MASK32)
    mask = np.uint64(_MASK32)
    m0, m1 = np.uint64(_M0), np.uint64(_M1)
    w0, w1 = np.uint64(_W0), np.uint64(_W1)
    thirty_two = np.uint64(32)
    for _ in range(10):
        p0 = m0 * (c0 & mask)
        p1 = m1 * (c2 & mask)
        hi0, lo0 = p0 >> thirty_two, p0 & mask
        hi1, lo1 = p1 >> thirty_two, p1 & mask
        c0, c1, c2, c3 = (hi1 ^ c1 ^ k0) & mask, lo1, (hi0 ^ c3 ^ k1) & mask, lo0
        k0 = (k0 + w0) & mask
        k1 = (k1 + w1) & mask
    return np.stack([c0, c1, c2, c3])


def _split_key(seed: int):
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return seed & _MASK32, seed >> 32


def _counter_words(stream: int, step, domain: int):
    """Counter layout: (step >> 1, stream_lo, stream_hi, domain)."""
    stream = int(stream) & 0xFFFFFFFFFFFFFFFF
    return (
        np.asarray(step, dtype=np.uint64) >> np.uint64(1),
        stream & _MASK32,
        stream >> 32,
        int(domain) & _MASK32,
    )


def raw_pairs(seed: int, stream: int, steps: np.ndarray, domain: int = 0) -> np.ndarray:
    """64-bit words for draw indices ``steps`` of one stream.

    Each Philox block yields two 64-bit words; draw k uses word (k & 1) of
    block (k >> 1), so consecutive steps share a block without breaking the
    pure-function-of-(seed, stream, step) contract.
    """
    steps = np.asarray(steps, dtype=np.uint64)
    half, s_lo, s_hi, dom = _counter_words(stream, steps, domain)
    n = steps.shape[0]
    ctr = np.empty((4, n), dtype=np.uint64)
    ctr[0] = half
    ctr[1] = s_lo
    ctr[2] = s_hi
    ctr[3] = dom
    out = philox4x32(ctr, np.array(_split_key(seed), dtype=np.uint64))
    lo_word = np.where(steps & np.uint64(1), out[2], out[0])
    hi_word = np.where(steps & np.uint64(1), out[3], out[1])
    return lo_word | (hi_word << np.uint64(32))


def uniform52(words: np.ndarray) -> np.ndarray:
    """Map 64-bit words to uniforms strictly inside (0, 1).

    The 52-bit lattice midpoints (k + 1/2) 2^-52 are all exactly
    representable, so the endpoints 0 and 1 are unreachable (the 53-bit
    variant is not safe: its top midpoint rounds to 1.0).
    """
    return ((np.asarray(words, dtype=np.uint64) >> np.uint64(12)).astype(np.float64)
            + 0.5) * _TWO_NEG_52


def inverse_normal_cdf(p):
    """Acklam's rational approximation of the standard normal quantile."""
    if np.ndim(p) == 0:
        return _acklam_scalar(float(p))
    p = np.asarray(p, dtype=float)
    out = np.empty_like(p)
    low = p < _P_LOW
    high = p > _P_HIGH
    mid = ~(low | high)
    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        num = ((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        out[mid] = num * q / den
    if np.any(low):
        q = np.sqrt(-2.0 * np.log(p[low]))
        out[low] = _tail_poly(q)
    if np.any(high):
        q = np.sqrt(-2.0 * np.log(1.0 - p[high]))
        out[high] = -_tail_poly(q)
    return out


def _tail_poly(q):
    num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
    den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
    return num / den


def _acklam_scalar(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        return num / den
    if p > _P_HIGH:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        return -(num / den)
    q = p - 0.5
    r = q * q
    num = ((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    return num * q / den


def uniform_stream(seed: int, stream: int, n: int, domain: int = 0) -> np.ndarray:
    """Uniforms u_0..u_{n-1} of one stream (pure function of the triple)."""
    return uniform52(raw_pairs(seed, stream, np.arange(n, dtype=np.uint64), domain))


def normal_stream(seed: int, stream: int, n: int, domain: int = 0) -> np.ndarray:
    """Standard normal draws z_0..z_{n-1} of one stream."""
    return inverse_normal_cdf(uniform_stream(seed, stream, n, domain))
