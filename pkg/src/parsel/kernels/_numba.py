"""Numba kernels: Philox uniform fill and the flow-line recursion."""

import numpy as np
from numba import njit

from ..rng import PHILOX_M0, PHILOX_M1, PHILOX_W0, PHILOX_W1

_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S12 = np.uint64(12)
_INV52 = 1.0 / 4503599627370496.0


@njit(inline="always")
def _mulhilo(a, b):
    a_lo = a & _MASK32
    a_hi = a >> _S32
    b_lo = b & _MASK32
    b_hi = b >> _S32
    lo_lo = a_lo * b_lo
    hi_lo = a_hi * b_lo
    lo_hi = a_lo * b_hi
    cross = (lo_lo >> _S32) + (hi_lo & _MASK32) + lo_hi
    hi = a_hi * b_hi + (hi_lo >> _S32) + (cross >> _S32)
    return hi, a * b


@njit(inline="always")
def _philox(c0, c1, c2, c3, k0, k1, out):
    for r in range(10):
        if r > 0:
            k0 = k0 + PHILOX_W0
            k1 = k1 + PHILOX_W1
        hi0, lo0 = _mulhilo(PHILOX_M0, c0)
        hi1, lo1 = _mulhilo(PHILOX_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    out[0] = c0
    out[1] = c1
    out[2] = c2
    out[3] = c3


@njit(cache=True, nogil=True)
def philox_block(c0, c1, c2, c3, k0, k1):
    out = np.empty(4, dtype=np.uint64)
    _philox(np.uint64(c0), np.uint64(c1), np.uint64(c2), np.uint64(c3), np.uint64(k0), np.uint64(k1), out)
    return out


@njit(cache=True, nogil=True)
def uniform_fill(k0, k1, first_sub, lane, counts, out):
    """Row ``j`` of ``out`` gets the first ``counts[j]`` uniforms of substream ``first_sub + j``."""
    key0 = np.uint64(k0)
    key1 = np.uint64(k1)
    lane_word = np.uint64(lane)
    zero = np.uint64(0)
    for j in range(out.shape[0]):
        row = out[j]
        sub = np.uint64(first_sub + j)
        n = counts[j]
        for block in range((n + 3) // 4):
            c0 = np.uint64(block)
            c1 = sub
            c2 = lane_word
            c3 = zero
            k0_ = key0
            k1_ = key1
            for r in range(10):
                if r > 0:
                    k0_ = k0_ + PHILOX_W0
                    k1_ = k1_ + PHILOX_W1
                hi0, lo0 = _mulhilo(PHILOX_M0, c0)
                hi1, lo1 = _mulhilo(PHILOX_M1, c2)
                c0, c1, c2, c3 = hi1 ^ c1 ^ k0_, lo1, hi0 ^ c3 ^ k1_, lo0
            # the shifted words have 53 bits, so the signed conversion is exact
            p = 4 * block
            if p + 4 <= n:
                row[p] = (float(np.int64(c0 >> _S12)) + 0.5) * _INV52
                row[p + 1] = (float(np.int64(c1 >> _S12)) + 0.5) * _INV52
                row[p + 2] = (float(np.int64(c2 >> _S12)) + 0.5) * _INV52
                row[p + 3] = (float(np.int64(c3 >> _S12)) + 0.5) * _INV52
            else:
                words = (c0, c1, c2, c3)
                for q in range(n - p):
                    row[p + q] = (float(np.int64(words[q] >> _S12)) + 0.5) * _INV52


@njit(cache=True, nogil=True)
def flowline_recursion(x, rates, caps, warmups, observe):
    """Throughput per row of ``x = log1p(-u)`` (row = replication)."""
    r1 = rates[0]
    r2 = rates[1]
    r3 = rates[2]
    b2 = caps[0]
    b3 = caps[1]
    ring2 = np.empty(b2)
    ring3 = np.empty(b3)
    out = np.empty(x.shape[0])
    for j in range(x.shape[0]):
        warm = warmups[j]
        total = warm + observe
        d1 = 0.0
        d2 = 0.0
        d3 = 0.0
        start = 0.0
        p2 = 0  # ring slot holding job n - b2
        p3 = 0
        for n in range(total):
            c1 = d1 - x[j, 3 * n] / r1
            d1 = max(c1, ring2[p2]) if n >= b2 else c1
            c2 = max(d1, d2) - x[j, 3 * n + 1] / r2
            d2 = max(c2, ring3[p3]) if n >= b3 else c2
            d3 = max(d2, d3) - x[j, 3 * n + 2] / r3
            ring2[p2] = d2
            ring3[p3] = d3
            p2 += 1
            if p2 == b2:
                p2 = 0
            p3 += 1
            if p3 == b3:
                p3 = 0
            if n + 1 == warm:
                start = d3
        out[j] = observe / (d3 - start)
    return out
