"""Numba kernels over packed occupancy rows.

Row ``j`` of the lattice is stored as ``ceil(nx / 64)`` little-endian uint64
words; bit ``i`` of the row is column ``i``.  Alongside the bits every row keeps

``front[j]``  rightmost occupied column,
``sat[j]``    first empty column (all columns ``< sat[j]`` are occupied),

which lets most events be classified without touching the bits.  The axis row
also maintains the hitting times ``tau`` (first occupation of the column) and
``sigma`` (first time the whole axis prefix up to the column is occupied).
"""
import numpy as np
from numba import njit

ONES = np.uint64(0xFFFFFFFFFFFFFFFF)
ZERO = np.uint64(0)

STATUS_EXHAUSTED = 0
STATUS_PAUSED = 1
STATUS_BARRIER = 2


@njit(cache=True, inline="always")
def _lo_mask(b):
    # bits b..63
    return ONES << np.uint64(b)


@njit(cache=True, inline="always")
def _hi_mask(b):
    # bits 0..b
    return ONES >> np.uint64(63 - b)


@njit(cache=True)
def _ctz(x):
    n = 0
    if (x & np.uint64(0xFFFFFFFF)) == ZERO:
        n += 32
        x >>= np.uint64(32)
    if (x & np.uint64(0xFFFF)) == ZERO:
        n += 16
        x >>= np.uint64(16)
    if (x & np.uint64(0xFF)) == ZERO:
        n += 8
        x >>= np.uint64(8)
    if (x & np.uint64(0xF)) == ZERO:
        n += 4
        x >>= np.uint64(4)
    if (x & np.uint64(0x3)) == ZERO:
        n += 2
        x >>= np.uint64(2)
    if (x & np.uint64(0x1)) == ZERO:
        n += 1
    return n


@njit(cache=True)
def any_set(row, a, b):
    wa = a >> 6
    wb = b >> 6
    if wa == wb:
        return (row[wa] & _lo_mask(a & 63) & _hi_mask(b & 63)) != ZERO
    if (row[wa] & _lo_mask(a & 63)) != ZERO:
        return True
    for w in range(wa + 1, wb):
        if row[w] != ZERO:
            return True
    return (row[wb] & _hi_mask(b & 63)) != ZERO


@njit(cache=True)
def fill(row, a, b):
    wa = a >> 6
    wb = b >> 6
    if wa == wb:
        row[wa] |= _lo_mask(a & 63) & _hi_mask(b & 63)
        return
    row[wa] |= _lo_mask(a & 63)
    for w in range(wa + 1, wb):
        row[w] = ONES
    row[wb] |= _hi_mask(b & 63)


@njit(cache=True)
def first_zero_from(row, p, nx):
    """Smallest column ``q >= p`` whose bit is clear, or ``nx``."""
    if p >= nx:
        return nx
    w = p >> 6
    word = ~row[w] & _lo_mask(p & 63)
    nwords = row.shape[0]
    while word == ZERO:
        w += 1
        if w >= nwords:
            return nx
        word = ~row[w]
    q = w * 64 + _ctz(word)
    return q if q < nx else nx


@njit(cache=True)
def apply_rect(occ, front, sat, tau, sigma, axis_row, nx, i0, i1, j0, j1, t):
    """Fill the clipped rectangle if it meets an occupied site.  Returns the hit flag."""
    hit = False
    for j in range(j0, j1 + 1):
        if i0 < sat[j]:
            hit = True
            break
        if i0 <= front[j]:
            hi = i1 if i1 < front[j] else front[j]
            if any_set(occ[j], i0, hi):
                hit = True
                break
    if not hit:
        return False
    for j in range(j0, j1 + 1):
        if i1 < sat[j]:
            continue
        row = occ[j]
        fill(row, i0, i1)
        if i1 > front[j]:
            front[j] = i1
        if j == axis_row:
            for c in range(i0, i1 + 1):
                if np.isinf(tau[c]):
                    tau[c] = t
        if i0 <= sat[j]:
            old = sat[j]
            new = first_zero_from(row, i1 + 1, nx)
            sat[j] = new
            if j == axis_row:
                for c in range(old, new):
                    sigma[c] = t
    return True


@njit(cache=True)
def run_batch(occ, front, sat, tau, sigma, axis_row, nx, ny,
              t_arr, ci_arr, cj_arr, atom_arr, half_w, half_h,
              start, stop_time, max_events, counters):
    """Apply events ``start, start+1, ...`` of a batch in time order.

    Stops before the first event later than ``stop_time`` (PAUSED), after the
    event that occupies the last column (BARRIER), once ``counters`` reach
    ``max_events`` drawn events (returned as EXHAUSTED with the cap flag set),
    or at the end of the batch (EXHAUSTED).

    ``counters`` holds ``[applied, ignored, cap_hit]`` and is updated in place.
    Returns ``(next_index, status, last_time)``.
    """
    n = t_arr.shape[0]
    k = start
    last = nx - 1
    t_prev = -1.0
    while k < n:
        if counters[0] + counters[1] >= max_events:
            counters[2] = 1
            return k, STATUS_EXHAUSTED, t_prev
        t = t_arr[k]
        if t > stop_time:
            return k, STATUS_PAUSED, t_prev
        a = atom_arr[k]
        ci = ci_arr[k]
        cj = cj_arr[k]
        i0 = ci - half_w[a]
        i1 = ci + half_w[a]
        j0 = cj - half_h[a]
        j1 = cj + half_h[a]
        if i0 < 0:
            i0 = 0
        if i1 > last:
            i1 = last
        if j0 < 0:
            j0 = 0
        if j1 > ny - 1:
            j1 = ny - 1
        k += 1
        t_prev = t
        if apply_rect(occ, front, sat, tau, sigma, axis_row, nx, i0, i1, j0, j1, t):
            counters[0] += 1
            if i1 == last:
                return k, STATUS_BARRIER, t
        else:
            counters[1] += 1
    return k, STATUS_EXHAUSTED, t_prev
