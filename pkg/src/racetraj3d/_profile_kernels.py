"""Compiled scalar kernels for the forward-backward speed profiler.

Per node the apparent accelerations are affine in ``s_ddot`` and ``s_dot**2``:
``a = base + s_ddot * c1 + s_dot**2 * c2`` (three components: ax, ay, g),
and speed is ``v = s_dot * speed_gain``.
"""

import math

import numpy as np
from numba import njit

SDD_LIMIT = 60.0
N_BISECT = 60
N_SCAN = 400


@njit(cache=True)
def _axis(grid, x):
    n = grid.shape[0]
    if n == 1:
        return 0, 0, 0.0
    if x <= grid[0]:
        return 0, 1, 0.0
    if x >= grid[n - 1]:
        return n - 2, n - 1, 1.0
    i = np.searchsorted(grid, x, side="right") - 1
    if i > n - 2:
        i = n - 2
    return i, i + 1, (x - grid[i]) / (grid[i + 1] - grid[i])


@njit(cache=True)
def _bilinear(tab, i0, i1, wv, j0, j1, wg):
    lo = tab[i0, j0] + wg * (tab[i0, j1] - tab[i0, j0])
    hi = tab[i1, j0] + wg * (tab[i1, j1] - tab[i1, j0])
    return lo + wv * (hi - lo)


@njit(cache=True)
def _shrink(e, a_mgn, a_abs, floor):
    e = abs(e)
    r = (1.0 - a_mgn) * e - a_abs
    if r < floor:
        r = floor
    return min(e, r)


@njit(cache=True)
def feasible(k, sd, sdd, base, c1, c2, gain, v_grid, g_grid, tabs, a_mgn, a_abs, floor, reserve):
    sd2 = sd * sd
    ax = base[k, 0] + sdd * c1[k, 0] + sd2 * c2[k, 0]
    ay = abs(base[k, 1] + sdd * c1[k, 1] + sd2 * c2[k, 1])
    gz = base[k, 2] + sdd * c1[k, 2] + sd2 * c2[k, 2]
    v = sd * gain[k]
    i0, i1, wv = _axis(v_grid, v)
    j0, j1, wg = _axis(g_grid, gz)
    ax_min = _shrink(_bilinear(tabs[0], i0, i1, wv, j0, j1, wg), a_mgn, a_abs, floor)
    ax_max = _shrink(_bilinear(tabs[1], i0, i1, wv, j0, j1, wg), a_mgn, a_abs, floor)
    ay_max = _shrink(_bilinear(tabs[2], i0, i1, wv, j0, j1, wg), a_mgn, a_abs, floor)
    p = _bilinear(tabs[3], i0, i1, wv, j0, j1, wg)
    ay_max *= 1.0 - reserve
    if ax > ax_max or ay > ay_max:
        return False
    ratio = min(ay / ay_max, 1.0)
    bracket = max(1.0 - ratio**p, 0.0)
    return abs(ax) <= ax_min * bracket ** (1.0 / p)


@njit(cache=True)
def max_speed(base, c1, c2, gain, v_grid, g_grid, tabs, a_mgn, a_abs, floor, reserve, v_cap):
    """Highest steady speed (zero ``s_ddot``) reachable from standstill per node, capped at ``v_cap``.

    Vertical load can grow with speed, so the feasible speeds need not form
    one interval; a coarse upward scan finds the first infeasible speed
    before bisecting, which ignores feasible islands above it.
    """
    n = base.shape[0]
    out = np.empty(n)
    for k in range(n):
        top = v_cap / gain[k]
        lo = 0.0
        hi = top
        found = False
        for j in range(1, N_SCAN + 1):
            v = top * j / N_SCAN
            if not feasible(k, v, 0.0, base, c1, c2, gain, v_grid, g_grid, tabs, a_mgn, a_abs, floor, reserve):
                hi = v
                found = True
                break
            lo = v
        if not found:
            out[k] = top
            continue
        for _ in range(N_BISECT):
            mid = 0.5 * (lo + hi)
            if feasible(k, mid, 0.0, base, c1, c2, gain, v_grid, g_grid, tabs, a_mgn, a_abs, floor, reserve):
                lo = mid
            else:
                hi = mid
        out[k] = lo
    return out


@njit(cache=True)
def _max_sdd(k, sd, base, c1, c2, gain, v_grid, g_grid, tabs, a_mgn, a_abs, floor):
    if not feasible(k, sd, 0.0, base, c1, c2, gain, v_grid, g_grid, tabs, a_mgn, a_abs, floor, 0.0):
        return -SDD_LIMIT
    hi = SDD_LIMIT
    if feasible(k, sd, hi, base, c1, c2, gain, v_grid, g_grid, tabs, a_mgn, a_abs, floor, 0.0):
        return hi
    lo = 0.0
    for _ in range(N_BISECT):
        mid = 0.5 * (lo + hi)
        if feasible(k, sd, mid, base, c1, c2, gain, v_grid, g_grid, tabs, a_mgn, a_abs, floor, 0.0):
            lo = mid
        else:
            hi = mid
    return lo


@njit(cache=True)
def forward_pass(sd, ds, base, c1, c2, gain, v_grid, g_grid, tabs, a_mgn, a_abs, floor, start):
    """Limit ``sd`` in place by the reachable acceleration, starting at node ``start``."""
    n = sd.shape[0]
    for k in range(start, n - 1):
        a = _max_sdd(k, sd[k], base, c1, c2, gain, v_grid, g_grid, tabs, a_mgn, a_abs, floor)
        reach2 = sd[k] * sd[k] + 2.0 * ds[k] * a
        reach = math.sqrt(reach2) if reach2 > 0.0 else 0.0
        if reach < sd[k + 1]:
            sd[k + 1] = reach


@njit(cache=True)
def backward_pass(sd, ds, base, c1, c2, gain, v_grid, g_grid, tabs, a_mgn, a_abs, floor, stop):
    """Limit ``sd`` in place so that braking towards each successor is feasible.

    The deceleration is evaluated at the unknown node, hence a bisection on
    its speed.
    """
    n = sd.shape[0]
    for k in range(n - 2, stop - 1, -1):
        nxt = sd[k + 1]
        cur = sd[k]
        if cur <= nxt:
            continue
        two_ds = 2.0 * ds[k]
        if feasible(k, cur, (nxt * nxt - cur * cur) / two_ds, base, c1, c2, gain,
                    v_grid, g_grid, tabs, a_mgn, a_abs, floor, 0.0):
            continue
        lo = nxt
        hi = cur
        for _ in range(N_BISECT):
            mid = 0.5 * (lo + hi)
            if feasible(k, mid, (nxt * nxt - mid * mid) / two_ds, base, c1, c2, gain,
                        v_grid, g_grid, tabs, a_mgn, a_abs, floor, 0.0):
                lo = mid
            else:
                hi = mid
        sd[k] = lo
