"""Compiled inner loops for the kernel-weighted conditional product limit.

Inputs are the weight carriers of one arm (subjects with an observed death),
sorted by observed death time.  For each conditioning time ``s`` the routine
builds the weighted product-limit curve of the first gap time and evaluates
it at ``min(grid, s)``; the curve is constant beyond its own conditioning
time, which is exactly the range over which downstream integrals read it.
"""

import numpy as np
from numba import njit

KERNEL_EPANECHNIKOV = 0
KERNEL_UNIFORM = 1
KERNEL_GAUSSIAN = 2

_SQRT_2PI = float(np.sqrt(2.0 * np.pi))


@njit(cache=True)
def _kernel_value(u, kernel_id):
    if kernel_id == KERNEL_EPANECHNIKOV:
        if u < -1.0 or u > 1.0:
            return 0.0
        return 0.75 * (1.0 - u * u)
    elif kernel_id == KERNEL_UNIFORM:
        if u < -1.0 or u > 1.0:
            return 0.0
        return 0.5
    else:
        return np.exp(-0.5 * u * u) / _SQRT_2PI


@njit(cache=True)
def conditional_km_matrix(
    t2_w, t1_w, d1_w, entry_w, use_entry,
    cond_times, grid, h, kernel_id,
):
    """Weighted product-limit curves at each conditioning time.

    Returns ``(mat, diag, ok)`` with ``mat[k, g]`` the curve for conditioning
    time ``cond_times[k]`` evaluated at ``min(grid[g], cond_times[k])``,
    ``diag[k]`` its value at the conditioning time itself and ``ok[k]`` false
    when no death carries kernel weight near ``cond_times[k]``.
    """
    n_w = t2_w.shape[0]
    n_cond = cond_times.shape[0]
    n_grid = grid.shape[0]
    mat = np.ones((n_cond, n_grid))
    diag = np.ones(n_cond)
    ok = np.ones(n_cond, dtype=np.bool_)

    for k in range(n_cond):
        s = cond_times[k]
        if kernel_id == KERNEL_GAUSSIAN:
            lo, hi = 0, n_w
        else:
            lo = np.searchsorted(t2_w, s - h, side="left")
            hi = np.searchsorted(t2_w, s + h, side="right")
        m = hi - lo
        if m == 0:
            ok[k] = False
            continue

        w = np.empty(m)
        q = 0.0
        for j in range(m):
            w[j] = _kernel_value((s - t2_w[lo + j]) / h, kernel_id)
            q += w[j]
        if q <= 0.0:
            ok[k] = False
            continue

        t1_win = t1_w[lo:hi]
        order = np.argsort(t1_win)

        # Count product-limit factors: diseased subjects with positive weight.
        n_fac = 0
        for j in range(m):
            if d1_w[lo + j] == 1 and w[j] > 0.0:
                n_fac += 1
        if n_fac == 0:
            continue

        fac_times = np.empty(n_fac)
        fac_values = np.empty(n_fac)

        if use_entry:
            # Delayed entry breaks the suffix-sum structure; risk sums are
            # evaluated per factor over the (small) window.
            f = 0
            for oj in range(m):
                j = order[oj]
                if d1_w[lo + j] != 1 or w[j] <= 0.0:
                    continue
                v = t1_win[j]
                denom = 0.0
                for l in range(m):
                    if entry_w[lo + l] <= v <= t1_win[l]:
                        denom += w[l]
                fac_times[f] = v
                fac_values[f] = 1.0 - w[j] / denom
                f += 1
        else:
            # Suffix sums of weights over t1-descending order give the risk
            # denominator for every factor in one pass; ties share a group
            # denominator (risk-set membership is inclusive at equal times).
            suffix = np.empty(m)
            acc = 0.0
            for oj in range(m - 1, -1, -1):
                acc += w[order[oj]]
                suffix[oj] = acc
            group_denom = np.empty(m)
            gstart = 0
            for oj in range(m):
                if oj > 0 and t1_win[order[oj]] != t1_win[order[oj - 1]]:
                    gstart = oj
                group_denom[oj] = suffix[gstart]
            f = 0
            for oj in range(m):
                j = order[oj]
                if d1_w[lo + j] != 1 or w[j] <= 0.0:
                    continue
                fac_times[f] = t1_win[j]
                fac_values[f] = 1.0 - w[j] / group_denom[oj]
                f += 1

        # Cumulative product along increasing factor time.
        prod = 1.0
        for f in range(n_fac):
            prod *= fac_values[f]
            fac_values[f] = prod

        # diag: curve at the conditioning time itself.
        dpos = np.searchsorted(fac_times, s, side="right") - 1
        diag[k] = fac_values[dpos] if dpos >= 0 else 1.0

        for g in range(n_grid):
            u = grid[g]
            if u > s:
                u = s
            pos = np.searchsorted(fac_times, u, side="right") - 1
            mat[k, g] = fac_values[pos] if pos >= 0 else 1.0

    return mat, diag, ok
