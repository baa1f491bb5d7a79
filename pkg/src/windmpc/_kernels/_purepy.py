"""Pure-Python plant integration kernels.

Fallback mirror of the compiled extension ``_core``.  The arithmetic here is
kept in exact lockstep with the Cython version (same operation order, no
``**`` on floats, libm ``exp`` only) so both backends produce bit-identical
trajectories; ``tests/test_kernels.py`` enforces that.
"""

from __future__ import annotations

import math

import numpy as np


def cp_value(lam, theta, c1, c2, c3, c4, c5, c6):
    """Six-coefficient analytic power-coefficient surface, clamped to [0, 0.6]."""
    inv_li = 1.0 / (lam + 0.08 * theta) - 0.035 / (theta * theta * theta + 1.0)
    cp = c1 * (c2 * inv_li - c3 * theta - c4) * math.exp(-c5 * inv_li) + c6 * lam
    if cp < 0.0:
        cp = 0.0
    elif cp > 0.6:
        cp = 0.6
    return cp


def _turbine_deriv(wr, wg, dl, th, ts, p_ref, v_w,
                   aero, w_r_gain, c1, c2, c3, c4, c5, c6,
                   hr2, hg2, ks, dsh, v_nom, kp, w_set, tau_servo, rate, th_max,
                   tau_track):
    # drive train: two inertias coupled by a flexible shaft; the mutual
    # damping term counters the negative incremental damping of the
    # constant-power electrical torque (t_e = P/w_g), which would otherwise
    # destabilize the torsional mode
    lam = wr * w_r_gain / v_w
    cp = cp_value(lam, th, c1, c2, c3, c4, c5, c6)
    p_m = aero * cp * (v_w * v_w * v_w)
    t_m = p_m / wr
    t_e = p_ref / wg
    slip = wr - wg
    d_wr = (t_m - ks * dl - dsh * slip) / hr2
    d_wg = (ks * dl + dsh * slip - t_e) / hg2
    d_dl = slip

    # pitch protection: PI on overspeed (integral action through the servo
    # state), first-order servo, rate-limited blade actuation; inactive below
    # nominal wind
    if v_w > v_nom:
        cmd = kp * (wr - w_set) + th
        if cmd < 0.0:
            cmd = 0.0
        elif cmd > th_max:
            cmd = th_max
    else:
        cmd = 0.0
    d_ts = (cmd - ts) / tau_servo
    d_th = (ts - th) / tau_track
    if d_th > rate:
        d_th = rate
    elif d_th < -rate:
        d_th = -rate
    return d_wr, d_wg, d_dl, d_th, d_ts


def turbine_step_raw(wr, wg, dl, th, ts, p_ref, v_w, dt, nsub,
                     aero, w_r_gain, c1, c2, c3, c4, c5, c6,
                     hr2, hg2, ks, dsh, v_nom, kp, w_set, tau_servo, rate,
                     th_max, tau_track):
    """Advance the five turbine states over ``dt`` with ``nsub`` RK4 substeps."""
    h = dt / nsub
    for _ in range(nsub):
        a1, b1, e1, f1, g1 = _turbine_deriv(
            wr, wg, dl, th, ts, p_ref, v_w,
            aero, w_r_gain, c1, c2, c3, c4, c5, c6,
            hr2, hg2, ks, dsh, v_nom, kp, w_set, tau_servo, rate, th_max,
            tau_track)
        hh = 0.5 * h
        a2, b2, e2, f2, g2 = _turbine_deriv(
            wr + hh * a1, wg + hh * b1, dl + hh * e1, th + hh * f1, ts + hh * g1,
            p_ref, v_w, aero, w_r_gain, c1, c2, c3, c4, c5, c6,
            hr2, hg2, ks, dsh, v_nom, kp, w_set, tau_servo, rate, th_max,
            tau_track)
        a3, b3, e3, f3, g3 = _turbine_deriv(
            wr + hh * a2, wg + hh * b2, dl + hh * e2, th + hh * f2, ts + hh * g2,
            p_ref, v_w, aero, w_r_gain, c1, c2, c3, c4, c5, c6,
            hr2, hg2, ks, dsh, v_nom, kp, w_set, tau_servo, rate, th_max,
            tau_track)
        a4, b4, e4, f4, g4 = _turbine_deriv(
            wr + h * a3, wg + h * b3, dl + h * e3, th + h * f3, ts + h * g3,
            p_ref, v_w, aero, w_r_gain, c1, c2, c3, c4, c5, c6,
            hr2, hg2, ks, dsh, v_nom, kp, w_set, tau_servo, rate, th_max,
            tau_track)
        s = h / 6.0
        wr = wr + s * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        wg = wg + s * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        dl = dl + s * (e1 + 2.0 * e2 + 2.0 * e3 + e4)
        th = th + s * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
        ts = ts + s * (g1 + 2.0 * g2 + 2.0 * g3 + g4)
        # angle saturation of the actuator
        if th < 0.0:
            th = 0.0
        elif th > th_max:
            th = th_max
        if ts < 0.0:
            ts = 0.0
        elif ts > th_max:
            ts = th_max
    return wr, wg, dl, th, ts


def turbine_sim(wr, wg, dl, th, ts, p_refs, v_ws, dt, nsub,
                aero, w_r_gain, c1, c2, c3, c4, c5, c6,
                hr2, hg2, ks, dsh, v_nom, kp, w_set, tau_servo, rate,
                th_max, tau_track):
    """Open-loop run over per-control-step (p_ref, v_w) arrays.

    Returns the rotor-speed series (length ``len(p_refs) + 1``, including the
    initial sample) and the final state tuple.
    """
    n = len(p_refs)
    omegas = np.empty(n + 1)
    omegas[0] = wr
    for k in range(n):
        wr, wg, dl, th, ts = turbine_step_raw(
            wr, wg, dl, th, ts, float(p_refs[k]), float(v_ws[k]), dt, nsub,
            aero, w_r_gain, c1, c2, c3, c4, c5, c6,
            hr2, hg2, ks, dsh, v_nom, kp, w_set, tau_servo, rate, th_max,
            tau_track)
        omegas[k + 1] = wr
    return omegas, (wr, wg, dl, th, ts)


def _grid_deriv(f, x1, g, w, pm0, p_wind, p_load,
                f_nom, h2, d_load, r_p, r_t, t_r, t_g, tw_half):
    # swing equation plus transient-droop hydro governor (deviation form)
    df_pu = (f - f_nom) / f_nom
    err = -df_pu
    a = (r_t / r_p) * t_r
    d_x1 = (err - x1) / a
    y1 = (r_p / r_t) * (err - x1) + x1
    d_g = (y1 / r_p - g) / t_g
    d_w = (g - w) / tw_half
    p_mech = pm0 + 3.0 * w - 2.0 * g  # water column gives the inverse response
    d_f = f_nom * (p_mech + p_wind - p_load - d_load * df_pu) / h2
    return d_f, d_x1, d_g, d_w


def grid_step_raw(f, x1, g, w, pm0, p_wind, p_load, dt, nsub,
                  f_nom, h2, d_load, r_p, r_t, t_r, t_w, t_g, g_min, g_max):
    """Advance frequency and governor states over ``dt`` with RK4 substeps."""
    h = dt / nsub
    tw_half = 0.5 * t_w
    lo = g_min - pm0
    hi = g_max - pm0
    for _ in range(nsub):
        a1, b1, e1, f1 = _grid_deriv(f, x1, g, w, pm0, p_wind, p_load,
                                     f_nom, h2, d_load, r_p, r_t, t_r, t_g, tw_half)
        hh = 0.5 * h
        a2, b2, e2, f2 = _grid_deriv(f + hh * a1, x1 + hh * b1, g + hh * e1, w + hh * f1,
                                     pm0, p_wind, p_load,
                                     f_nom, h2, d_load, r_p, r_t, t_r, t_g, tw_half)
        a3, b3, e3, f3 = _grid_deriv(f + hh * a2, x1 + hh * b2, g + hh * e2, w + hh * f2,
                                     pm0, p_wind, p_load,
                                     f_nom, h2, d_load, r_p, r_t, t_r, t_g, tw_half)
        a4, b4, e4, f4 = _grid_deriv(f + h * a3, x1 + h * b3, g + h * e3, w + h * f3,
                                     pm0, p_wind, p_load,
                                     f_nom, h2, d_load, r_p, r_t, t_r, t_g, tw_half)
        s = h / 6.0
        f = f + s * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        x1 = x1 + s * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        g = g + s * (e1 + 2.0 * e2 + 2.0 * e3 + e4)
        w = w + s * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
        # gate limits (absolute gate = pm0 + g)
        if g < lo:
            g = lo
        elif g > hi:
            g = hi
    return f, x1, g, w
