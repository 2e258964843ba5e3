"""Pure-Python kernels. Reference behaviour for the compiled ``_core`` module.

The arithmetic here is written operation-for-operation like ``_core.pyx`` so
that both backends produce bit-identical floats.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND = "python"

_CHUNK = 4096


def krauss_safe_speed(v_follower, v_leader, gap, t_r, b_max):
    x = v_leader + (gap - v_leader * t_r) / ((v_follower + v_leader) / (2.0 * b_max) + t_r)
    return x if x > 0.0 else 0.0


def human_sweep(old_pos, old_spd, pos, spd, acc, held, lengths, first, decide, uniforms,
                a_max, b_max, v_max, t_r, sigma, min_gap, tau, dt):
    """Advance followers ``first..n-1`` one step from the previous snapshot.

    ``pos``, ``spd``, ``acc`` and ``held`` are written in place for those
    indices. ``held`` carries the acceleration chosen at the last decision
    instant; ``decide`` triggers a fresh decision over horizon ``tau``.
    """
    n = len(old_pos)
    op = old_pos.tolist()
    ov = old_spd.tolist()
    ln = lengths.tolist()
    hd = held.tolist()
    us = uniforms.tolist() if decide else None
    single = tau == dt
    for i in range(first, n):
        v = ov[i]
        vl = ov[i - 1]
        g = op[i - 1] - ln[i - 1] - op[i] - min_gap
        if decide:
            vs = krauss_safe_speed(v, vl, g, t_r, b_max)
            vd = v_max
            va = v + a_max * tau
            if va < vd:
                vd = va
            if vs < vd:
                vd = vs
            vt = vd - sigma * a_max * tau * us[i]
            if not vt > 0.0:
                vt = 0.0
            if single:
                hd[i] = (vt - v) / dt
                vn = vt
            else:
                hd[i] = (vt - v) / tau
                vn = v + hd[i] * dt
        else:
            vn = v + hd[i] * dt
        if not vn > 0.0:
            vn = 0.0
        cap = krauss_safe_speed(v, vl, g, dt, b_max)
        if cap < vn:
            vn = cap
        acc[i] = (vn - v) / dt
        spd[i] = vn
        pos[i] = op[i] + vn * dt
        held[i] = hd[i]


def rolling_stats(x, window):
    """Mean and sample std of every length-``window`` slice ``x[k:k+window]``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    nwin = len(x) - window + 1
    means = np.empty(nwin)
    stds = np.empty(nwin)
    views = sliding_window_view(x, window)
    for lo in range(0, nwin, _CHUNK):
        w = views[lo:lo + _CHUNK]
        m = w.mean(axis=1)
        d = w - m[:, None]
        means[lo:lo + _CHUNK] = m
        stds[lo:lo + _CHUNK] = np.sqrt((d * d).sum(axis=1) / (window - 1))
    return means, stds
