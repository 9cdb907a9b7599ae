"""Compiled kernels for the rho-variation dynamic programme."""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def turning_points(a):
    """Indices that can appear in an optimal rho-variation witness (rho >= 1).

    Runs of equal values collapse onto their first index and interior points of
    monotone runs are dropped: for same-signed increments
    ``|u + w|**rho >= |u|**rho + |w|**rho``, so skipping them never loses mass.
    """
    n = a.shape[0]
    out = np.empty(n, dtype=np.int64)
    if n == 0:
        return out[:0]
    # first compress plateaus
    keep = np.empty(n, dtype=np.int64)
    m = 0
    keep[0] = 0
    m = 1
    for i in range(1, n):
        if a[i] != a[keep[m - 1]]:
            keep[m] = i
            m += 1
    if m <= 2:
        out[:m] = keep[:m]
        return out[:m]
    k = 0
    out[0] = keep[0]
    k = 1
    for r in range(1, m - 1):
        prev = a[keep[r - 1]]
        cur = a[keep[r]]
        nxt = a[keep[r + 1]]
        # plateaus are gone, so compare directions (a product of increments can underflow)
        if (cur > prev) != (nxt > cur):
            out[k] = keep[r]
            k += 1
    out[k] = keep[m - 1]
    k += 1
    return out[:k]


@njit(cache=True)
def suffix_dp(a, rho):
    """Best rho-sum of a path starting at each index.

    Returns ``(best, length, nxt)``: ``best[i]`` is the maximal
    ``sum |a_{n_k} - a_{n_{k+1}}|**rho`` over increasing paths starting at ``i``,
    ``length[i]`` the fewest points of an optimal path, and ``nxt[i]`` the
    smallest successor index realising both (``-1`` when the path stops).
    """
    n = a.shape[0]
    best = np.zeros(n)
    length = np.ones(n, dtype=np.int64)
    nxt = -np.ones(n, dtype=np.int64)
    for i in range(n - 2, -1, -1):
        ai = a[i]
        b = 0.0
        bl = 1
        bk = -1
        for k in range(i + 1, n):
            c = abs(a[k] - ai) ** rho + best[k]
            if c > b:
                b = c
                bl = length[k] + 1
                bk = k
            elif c == b and c > 0.0 and length[k] + 1 < bl:
                bl = length[k] + 1
                bk = k
        best[i] = b
        length[i] = bl
        nxt[i] = bk
    return best, length, nxt


@njit(cache=True)
def variation_value(a, rho):
    """``max_i best(i)`` (the rho-th power of the variation), no witness bookkeeping."""
    n = a.shape[0]
    if n < 2:
        return 0.0
    best = np.zeros(n)
    top = 0.0
    for i in range(n - 2, -1, -1):
        ai = a[i]
        b = 0.0
        for k in range(i + 1, n):
            c = abs(a[k] - ai) ** rho + best[k]
            if c > b:
                b = c
        best[i] = b
        if b > top:
            top = b
    return top


@njit(cache=True)
def row_variations(rows, rho):
    """rho-variation of every row of a 2-D array; NaN entries are skipped."""
    r, c = rows.shape
    out = np.zeros(r)
    buf = np.empty(c)
    for i in range(r):
        m = 0
        for j in range(c):
            v = rows[i, j]
            if v == v:
                buf[m] = v
                m += 1
        seq = buf[:m].copy()
        idx = turning_points(seq)
        out[i] = variation_value(seq[idx], rho) ** (1.0 / rho)
    return out
