# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; mirrors ``_pycore`` operation-for-operation."""
import numpy as np
from libc.math cimport sqrt

BACKEND = "cython"


cdef inline double _safe(double vf, double vl, double gap, double t_r, double b_max) nogil:
    cdef double x = vl + (gap - vl * t_r) / ((vf + vl) / (2.0 * b_max) + t_r)
    return x if x > 0.0 else 0.0


def krauss_safe_speed(double v_follower, double v_leader, double gap, double t_r, double b_max):
    return _safe(v_follower, v_leader, gap, t_r, b_max)


def human_sweep(double[::1] old_pos, double[::1] old_spd, double[::1] pos, double[::1] spd,
                double[::1] acc, double[::1] held, double[::1] lengths, Py_ssize_t first,
                bint decide, uniforms, double a_max, double b_max, double v_max,
                double t_r, double sigma, double min_gap, double tau, double dt):
    cdef Py_ssize_t n = old_pos.shape[0]
    cdef Py_ssize_t i
    cdef double v, vl, g, vs, vd, va, vt, vn, cap
    cdef bint single = tau == dt
    cdef double[::1] us
    if decide:
        us = uniforms
    for i in range(first, n):
        v = old_spd[i]
        vl = old_spd[i - 1]
        g = old_pos[i - 1] - lengths[i - 1] - old_pos[i] - min_gap
        if decide:
            vs = _safe(v, vl, g, t_r, b_max)
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
                held[i] = (vt - v) / dt
                vn = vt
            else:
                held[i] = (vt - v) / tau
                vn = v + held[i] * dt
        else:
            vn = v + held[i] * dt
        if not vn > 0.0:
            vn = 0.0
        cap = _safe(v, vl, g, dt, b_max)
        if cap < vn:
            vn = cap
        acc[i] = (vn - v) / dt
        spd[i] = vn
        pos[i] = old_pos[i] + vn * dt


def rolling_stats(x, Py_ssize_t window):
    cdef double[::1] xs = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t nwin = xs.shape[0] - window + 1
    means_a = np.empty(nwin)
    stds_a = np.empty(nwin)
    cdef double[::1] means = means_a
    cdef double[::1] stds = stds_a
    cdef Py_ssize_t k, j
    cdef double s, m, d
    with nogil:
        for k in range(nwin):
            s = 0.0
            for j in range(window):
                s += xs[k + j]
            m = s / window
            s = 0.0
            for j in range(window):
                d = xs[k + j] - m
                s += d * d
            means[k] = m
            stds[k] = sqrt(s / (window - 1))
    return means_a, stds_a
