# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled plant integration kernels.

Exact mirror of ``_purepy``: same operation order, same libm calls, compiled
with -ffp-contract=off, so results are bit-identical with the fallback.
"""

from libc.math cimport exp

import numpy as np


cdef inline double _cp(double lam, double theta,
                       double c1, double c2, double c3, double c4,
                       double c5, double c6) nogil:
    cdef double inv_li, cp
    inv_li = 1.0 / (lam + 0.08 * theta) - 0.035 / (theta * theta * theta + 1.0)
    cp = c1 * (c2 * inv_li - c3 * theta - c4) * exp(-c5 * inv_li) + c6 * lam
    if cp < 0.0:
        cp = 0.0
    elif cp > 0.6:
        cp = 0.6
    return cp


def cp_value(double lam, double theta,
             double c1, double c2, double c3, double c4, double c5, double c6):
    """Six-coefficient analytic power-coefficient surface, clamped to [0, 0.6]."""
    return _cp(lam, theta, c1, c2, c3, c4, c5, c6)


cdef inline void _turbine_deriv(double wr, double wg, double dl, double th, double ts,
                                double p_ref, double v_w,
                                double aero, double w_r_gain,
                                double c1, double c2, double c3, double c4,
                                double c5, double c6,
                                double hr2, double hg2, double ks, double dsh,
                                double v_nom,
                                double kp, double w_set, double tau_servo,
                                double rate, double th_max, double tau_track,
                                double* out) nogil:
    cdef double lam, cp, p_m, t_m, t_e, slip, cmd, d_th
    lam = wr * w_r_gain / v_w
    cp = _cp(lam, th, c1, c2, c3, c4, c5, c6)
    p_m = aero * cp * (v_w * v_w * v_w)
    t_m = p_m / wr
    t_e = p_ref / wg
    slip = wr - wg
    out[0] = (t_m - ks * dl - dsh * slip) / hr2
    out[1] = (ks * dl + dsh * slip - t_e) / hg2
    out[2] = slip

    if v_w > v_nom:
        cmd = kp * (wr - w_set) + th
        if cmd < 0.0:
            cmd = 0.0
        elif cmd > th_max:
            cmd = th_max
    else:
        cmd = 0.0
    out[4] = (cmd - ts) / tau_servo
    d_th = (ts - th) / tau_track
    if d_th > rate:
        d_th = rate
    elif d_th < -rate:
        d_th = -rate
    out[3] = d_th


cdef inline void _turbine_rk4(double* y, double p_ref, double v_w,
                              double dt, int nsub,
                              double aero, double w_r_gain,
                              double c1, double c2, double c3, double c4,
                              double c5, double c6,
                              double hr2, double hg2, double ks, double dsh, double v_nom,
                              double kp, double w_set, double tau_servo,
                              double rate, double th_max, double tau_track) nogil:
    cdef double h = dt / nsub
    cdef double hh, s
    cdef double k1[5]
    cdef double k2[5]
    cdef double k3[5]
    cdef double k4[5]
    cdef int i, j
    for i in range(nsub):
        _turbine_deriv(y[0], y[1], y[2], y[3], y[4], p_ref, v_w,
                       aero, w_r_gain, c1, c2, c3, c4, c5, c6,
                       hr2, hg2, ks, dsh, v_nom, kp, w_set, tau_servo, rate, th_max,
                       tau_track, k1)
        hh = 0.5 * h
        _turbine_deriv(y[0] + hh * k1[0], y[1] + hh * k1[1], y[2] + hh * k1[2],
                       y[3] + hh * k1[3], y[4] + hh * k1[4], p_ref, v_w,
                       aero, w_r_gain, c1, c2, c3, c4, c5, c6,
                       hr2, hg2, ks, dsh, v_nom, kp, w_set, tau_servo, rate, th_max,
                       tau_track, k2)
        _turbine_deriv(y[0] + hh * k2[0], y[1] + hh * k2[1], y[2] + hh * k2[2],
                       y[3] + hh * k2[3], y[4] + hh * k2[4], p_ref, v_w,
                       aero, w_r_gain, c1, c2, c3, c4, c5, c6,
                       hr2, hg2, ks, dsh, v_nom, kp, w_set, tau_servo, rate, th_max,
                       tau_track, k3)
        _turbine_deriv(y[0] + h * k3[0], y[1] + h * k3[1], y[2] + h * k3[2],
                       y[3] + h * k3[3], y[4] + h * k3[4], p_ref, v_w,
                       aero, w_r_gain, c1, c2, c3, c4, c5, c6,
                       hr2, hg2, ks, dsh, v_nom, kp, w_set, tau_servo, rate, th_max,
                       tau_track, k4)
        s = h / 6.0
        for j in range(5):
            y[j] = y[j] + s * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        if y[3] < 0.0:
            y[3] = 0.0
        elif y[3] > th_max:
            y[3] = th_max
        if y[4] < 0.0:
            y[4] = 0.0
        elif y[4] > th_max:
            y[4] = th_max


def turbine_step_raw(double wr, double wg, double dl, double th, double ts,
                     double p_ref, double v_w, double dt, int nsub,
                     double aero, double w_r_gain,
                     double c1, double c2, double c3, double c4,
                     double c5, double c6,
                     double hr2, double hg2, double ks, double dsh, double v_nom,
                     double kp, double w_set, double tau_servo,
                     double rate, double th_max, double tau_track):
    """Advance the five turbine states over ``dt`` with ``nsub`` RK4 substeps."""
    cdef double y[5]
    y[0] = wr
    y[1] = wg
    y[2] = dl
    y[3] = th
    y[4] = ts
    _turbine_rk4(y, p_ref, v_w, dt, nsub, aero, w_r_gain,
                 c1, c2, c3, c4, c5, c6, hr2, hg2, ks, dsh, v_nom,
                 kp, w_set, tau_servo, rate, th_max, tau_track)
    return y[0], y[1], y[2], y[3], y[4]


def turbine_sim(double wr, double wg, double dl, double th, double ts,
                p_refs, v_ws, double dt, int nsub,
                double aero, double w_r_gain,
                double c1, double c2, double c3, double c4,
                double c5, double c6,
                double hr2, double hg2, double ks, double dsh, double v_nom,
                double kp, double w_set, double tau_servo,
                double rate, double th_max, double tau_track):
    """Open-loop run over per-control-step (p_ref, v_w) arrays.

    Returns the rotor-speed series (length ``len(p_refs) + 1``, including the
    initial sample) and the final state tuple.
    """
    cdef double[::1] pr = np.ascontiguousarray(p_refs, dtype=np.float64)
    cdef double[::1] vw = np.ascontiguousarray(v_ws, dtype=np.float64)
    cdef int n = pr.shape[0]
    omegas = np.empty(n + 1)
    cdef double[::1] om = omegas
    cdef double y[5]
    cdef int k
    y[0] = wr
    y[1] = wg
    y[2] = dl
    y[3] = th
    y[4] = ts
    om[0] = wr
    with nogil:
        for k in range(n):
            _turbine_rk4(y, pr[k], vw[k], dt, nsub, aero, w_r_gain,
                         c1, c2, c3, c4, c5, c6, hr2, hg2, ks, dsh, v_nom,
                         kp, w_set, tau_servo, rate, th_max, tau_track)
            om[k + 1] = y[0]
    return omegas, (y[0], y[1], y[2], y[3], y[4])


cdef inline void _grid_deriv(double f, double x1, double g, double w,
                             double pm0, double p_wind, double p_load,
                             double f_nom, double h2, double d_load,
                             double r_p, double r_t, double t_r, double t_g,
                             double tw_half, double* out) nogil:
    cdef double df_pu, err, a, y1, p_mech
    df_pu = (f - f_nom) / f_nom
    err = -df_pu
    a = (r_t / r_p) * t_r
    out[1] = (err - x1) / a
    y1 = (r_p / r_t) * (err - x1) + x1
    out[2] = (y1 / r_p - g) / t_g
    out[3] = (g - w) / tw_half
    p_mech = pm0 + 3.0 * w - 2.0 * g
    out[0] = f_nom * (p_mech + p_wind - p_load - d_load * df_pu) / h2


def grid_step_raw(double f, double x1, double g, double w, double pm0,
                  double p_wind, double p_load, double dt, int nsub,
                  double f_nom, double h2, double d_load,
                  double r_p, double r_t, double t_r, double t_w, double t_g,
                  double g_min, double g_max):
    """Advance frequency and governor states over ``dt`` with RK4 substeps."""
    cdef double h = dt / nsub
    cdef double tw_half = 0.5 * t_w
    cdef double lo = g_min - pm0
    cdef double hi = g_max - pm0
    cdef double hh, s
    cdef double k1[4]
    cdef double k2[4]
    cdef double k3[4]
    cdef double k4[4]
    cdef int i
    for i in range(nsub):
        _grid_deriv(f, x1, g, w, pm0, p_wind, p_load,
                    f_nom, h2, d_load, r_p, r_t, t_r, t_g, tw_half, k1)
        hh = 0.5 * h
        _grid_deriv(f + hh * k1[0], x1 + hh * k1[1], g + hh * k1[2], w + hh * k1[3],
                    pm0, p_wind, p_load,
                    f_nom, h2, d_load, r_p, r_t, t_r, t_g, tw_half, k2)
        _grid_deriv(f + hh * k2[0], x1 + hh * k2[1], g + hh * k2[2], w + hh * k2[3],
                    pm0, p_wind, p_load,
                    f_nom, h2, d_load, r_p, r_t, t_r, t_g, tw_half, k3)
        _grid_deriv(f + h * k3[0], x1 + h * k3[1], g + h * k3[2], w + h * k3[3],
                    pm0, p_wind, p_load,
                    f_nom, h2, d_load, r_p, r_t, t_r, t_g, tw_half, k4)
        s = h / 6.0
        f = f + s * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        x1 = x1 + s * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        g = g + s * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        w = w + s * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
        if g < lo:
            g = lo
        elif g > hi:
            g = hi
    return f, x1, g, w
