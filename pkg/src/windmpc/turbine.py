"""Electromechanical model of an aggregated DFIG turbine group.

Wind power capture through an analytic power-coefficient surface, a two-mass
drive train (turbine and generator inertias coupled by an undamped flexible
shaft), converter-fast active power tracking, pitch overspeed protection and
the cubic MPPT reference law.  All powers are per-unit on the group rating,
speeds per-unit on ``omega_base``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .errors import DivergenceError, DomainError

#: default coefficients of the analytic c_p(lambda, theta) approximation
DEFAULT_CP_COEFFS = (0.5176, 116.0, 0.4, 5.0, 21.0, 0.0068)


@dataclass(frozen=True)
class PitchParams:
    """Pitch protection loop: PI on rotor overspeed behind a rate-limited servo."""

    tau_servo: float = 0.3    # actuator lag (s)
    rate_limit: float = 10.0  # deg/s
    theta_max: float = 27.0   # deg
    kp: float = 40.0          # deg per p.u. overspeed
    omega_set: float = 1.25   # p.u. speed where pitching starts to hold
    tau_track: float = 0.1    # blade tracking constant (s)


@dataclass(frozen=True)
class TurbineParams:
    """Physical constants of one aggregated group of identical machines."""

    rho: float = 1.225            # air density (kg/m^3)
    R: float = 38.5               # blade radius (m)
    A_rot: float = math.pi * 38.5 * 38.5  # swept area (m^2)
    H_R: float = 4.0              # turbine inertia constant (s)
    H_G: float = 0.5              # generator inertia constant (s)
    K_s: float = 100.0            # shaft stiffness (p.u. torque / rad)
    D_sh: float = 2.5             # mutual shaft damping (p.u. torque / p.u. slip)
    S_rated: float = 1.5          # single-machine rating (MW)
    omega_base: float = 1.745     # base mechanical speed (rad/s)
    omega_min: float = 0.7        # p.u.
    omega_max: float = 1.3        # p.u.
    P_min: float = 0.0            # p.u.
    P_max: float = 1.0            # p.u.
    v_nominal: float = 10.309096601575076   # m/s, rated power at c_p peak
    cp_coeffs: tuple = DEFAULT_CP_COEFFS
    pitch: PitchParams = PitchParams()
    k_opt: float = 0.5207541542231715       # MPPT cubic gain (p.u.)
    n_machines: int = 50          # machines aggregated into this group
    dt_max: float = 0.01          # largest internal integrator step (s)

    def __post_init__(self):
        for name in ("rho", "R", "A_rot", "H_R", "H_G", "K_s", "S_rated",
                     "omega_base", "v_nominal", "k_opt", "dt_max"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if not self.omega_min < self.omega_max:
            raise ValueError("omega_min must be below omega_max")
        if not self.P_min < self.P_max:
            raise ValueError("P_min must be below P_max")
        if len(self.cp_coeffs) != 6:
            raise ValueError("cp_coeffs must have six entries")
        if abs(self.A_rot - math.pi * self.R * self.R) > 1e-6 * self.A_rot:
            raise ValueError("A_rot must equal pi * R^2")

    @property
    def s_rated_w(self) -> float:
        return self.S_rated * 1e6

    @property
    def aero_gain(self) -> float:
        """0.5 rho A / S_rated: p.u. mechanical power per (m/s)^3 at c_p = 1."""
        return 0.5 * self.rho * self.A_rot / self.s_rated_w

    @property
    def group_mw(self) -> float:
        """Aggregated group rating (MW)."""
        return self.n_machines * self.S_rated

    def kernel_args(self) -> tuple:
        """Flat float tuple consumed by the integration kernels."""
        c = self.cp_coeffs
        p = self.pitch
        return (self.aero_gain, self.omega_base * self.R,
                c[0], c[1], c[2], c[3], c[4], c[5],
                2.0 * self.H_R, 2.0 * self.H_G, self.K_s, self.D_sh,
                self.v_nominal, p.kp, p.omega_set, p.tau_servo, p.rate_limit,
                p.theta_max, p.tau_track)

    @classmethod
    def calibrated(cls, **overrides) -> "TurbineParams":
        """Params with v_nominal and k_opt derived from the c_p peak.

        v_nominal is the wind speed where the optimally tracked rotor captures
        exactly rated power; k_opt makes the cubic MPPT law coincide with the
        c_p optimum at every sub-rated wind speed.
        """
        base = cls(**overrides)
        lam_star, cp_star = cp_peak(base.cp_coeffs)
        v_nom = (1.0 / (base.aero_gain * cp_star)) ** (1.0 / 3.0)
        k_opt = base.aero_gain * cp_star * (base.omega_base * base.R / lam_star) ** 3
        return replace(base, v_nominal=v_nom, k_opt=k_opt)


@dataclass(frozen=True)
class TurbineState:
    """Electromechanical state of one group."""

    omega_r: float        # rotor (turbine-side) speed, p.u.
    omega_g: float        # generator-side speed, p.u.
    delta_rg: float       # shaft twist, rad
    theta: float = 0.0    # blade pitch angle, deg
    theta_servo: float = 0.0  # pitch actuator internal state, deg


@dataclass(frozen=True)
class ControlInput:
    """Exogenous pair driving one group."""

    p_ref: float  # active power reference, p.u.
    v_w: float    # local wind speed, m/s

    def __post_init__(self):
        if self.v_w < 0.0:
            raise DomainError("wind speed must be nonnegative")


def cp_curve(lam: float, theta: float, coeffs=DEFAULT_CP_COEFFS) -> float:
    """Power coefficient at tip-speed ratio ``lam`` and pitch ``theta`` (deg)."""
    if lam <= 0.0:
        raise DomainError("tip-speed ratio must be positive")
    return _kernels.cp_value(lam, theta, *coeffs)


def cp_peak(coeffs=DEFAULT_CP_COEFFS, theta: float = 0.0) -> tuple[float, float]:
    """(lambda*, c_p*) of the zero-pitch curve, via grid scan plus refinement."""
    lo, hi, best_l, best_c = 0.5, 20.0, 1.0, 0.0
    for _ in range(4):
        n = 2000
        step = (hi - lo) / n
        best_c = -1.0
        for i in range(n + 1):
            lam = lo + i * step
            c = _kernels.cp_value(lam, theta, *coeffs)
            if c > best_c:
                best_c, best_l = c, lam
        lo, hi = max(best_l - 2.0 * step, 1e-6), best_l + 2.0 * step
    return best_l, best_c


def tip_speed_ratio(omega_r: float, v_w: float, params: TurbineParams) -> float:
    """lambda = omega_r * omega_base * R / v_w."""
    if v_w <= 0.0:
        raise DomainError("tip-speed ratio undefined at zero wind")
    return omega_r * params.omega_base * params.R / v_w


def mechanical_power(v_w: float, omega_r: float, theta: float,
                     params: TurbineParams) -> float:
    """Captured wind power (p.u. of rating); zero in calm air."""
    if v_w < 0.0:
        raise DomainError("wind speed must be nonnegative")
    if v_w == 0.0:
        return 0.0
    lam = tip_speed_ratio(omega_r, v_w, params)
    return params.aero_gain * cp_curve(lam, theta, params.cp_coeffs) * v_w ** 3


def mppt_reference(omega_r: float, params: TurbineParams) -> float:
    """Cubic-law MPPT power order, clamped to the reference box."""
    if omega_r < 0.0:
        raise DomainError("rotor speed must be nonnegative")
    p = params.k_opt * omega_r ** 3
    return min(max(p, params.P_min), params.P_max)


def pitch_step(state: TurbineState, v_w: float, dt: float,
               params: TurbineParams) -> TurbineState:
    """Advance only the pitch servo/actuator states, rotor speed held fixed."""
    if dt <= 0.0:
        raise DomainError("dt must be positive")
    p = params.pitch
    nsub = max(1, math.ceil(dt / params.dt_max))
    h = dt / nsub
    th, ts = state.theta, state.theta_servo

    def deriv(th_, ts_):
        if v_w > params.v_nominal:
            cmd = p.kp * (state.omega_r - p.omega_set) + th_
            cmd = min(max(cmd, 0.0), p.theta_max)
        else:
            cmd = 0.0
        d_ts = (cmd - ts_) / p.tau_servo
        d_th = (ts_ - th_) / p.tau_track
        d_th = min(max(d_th, -p.rate_limit), p.rate_limit)
        return d_th, d_ts

    for _ in range(nsub):
        f1, g1 = deriv(th, ts)
        f2, g2 = deriv(th + 0.5 * h * f1, ts + 0.5 * h * g1)
        f3, g3 = deriv(th + 0.5 * h * f2, ts + 0.5 * h * g2)
        f4, g4 = deriv(th + h * f3, ts + h * g3)
        th += h / 6.0 * (f1 + 2 * f2 + 2 * f3 + f4)
        ts += h / 6.0 * (g1 + 2 * g2 + 2 * g3 + g4)
        th = min(max(th, 0.0), p.theta_max)
        ts = min(max(ts, 0.0), p.theta_max)
    return replace(state, theta=th, theta_servo=ts)


def turbine_step(state: TurbineState, u: ControlInput, dt: float,
                 params: TurbineParams) -> TurbineState:
    """Integrate the coupled drive-train and pitch ODEs over ``dt``."""
    if dt <= 0.0:
        raise DomainError("dt must be positive")
    if state.omega_r <= 0.0 or state.omega_g <= 0.0:
        raise DomainError("rotor speeds must be positive")
    if u.v_w <= 0.0:
        raise DomainError("turbine_step requires positive wind speed")
    nsub = max(1, math.ceil(dt / params.dt_max - 1e-12))
    wr, wg, dl, th, ts = _kernels.turbine_step_raw(
        state.omega_r, state.omega_g, state.delta_rg, state.theta,
        state.theta_servo, u.p_ref, u.v_w, dt, nsub, *params.kernel_args())
    if not (0.0 < wr < 2.0 * params.omega_max) or not (0.0 < wg < 2.0 * params.omega_max):
        raise DivergenceError(
            f"rotor speed left (0, {2.0 * params.omega_max}): omega_r={wr}, omega_g={wg}")
    return TurbineState(wr, wg, dl, th, ts)


def simulate_open_loop(state: TurbineState, p_refs, v_ws, t_s: float,
                       params: TurbineParams):
    """Run ``len(p_refs)`` control steps of ``t_s`` seconds each.

    Inputs are held constant within a control step.  Returns the rotor-speed
    samples at control instants (length ``len(p_refs) + 1``) and the final
    state.
    """
    nsub = max(1, math.ceil(t_s / params.dt_max - 1e-12))
    omegas, final = _kernels.turbine_sim(
        state.omega_r, state.omega_g, state.delta_rg, state.theta,
        state.theta_servo, p_refs, v_ws, t_s, nsub, *params.kernel_args())
    if not np.all((omegas > 0.0) & (omegas < 2.0 * params.omega_max)):
        bad = int(np.argmax(~((omegas > 0.0) & (omegas < 2.0 * params.omega_max))))
        raise DivergenceError(f"rotor speed diverged at control step {bad}")
    return omegas, TurbineState(*final)


def mppt_equilibrium(v_w: float, params: TurbineParams) -> TurbineState:
    """Steady operating point under the local MPPT law at constant wind.

    Below nominal wind this sits on the c_p optimum; above it the pitch loop
    holds the rotor near its setpoint at rated power.
    """
    if v_w <= 0.0:
        raise DomainError("equilibrium requires positive wind")

    def imbalance(w):
        return mechanical_power(v_w, w, 0.0, params) - params.k_opt * w ** 3

    if v_w <= params.v_nominal:
        lo, hi = 0.05, params.omega_max * 1.6
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if imbalance(mid) > 0.0:
                lo = mid
            else:
                hi = mid
        w = 0.5 * (lo + hi)
        te = params.k_opt * w ** 3 / w
        return TurbineState(w, w, te / params.K_s, 0.0, 0.0)

    # above nominal wind: rated power, pitch trimming the surplus
    w = params.pitch.omega_set
    p_e = params.P_max
    lo, hi = 0.0, params.pitch.theta_max
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mechanical_power(v_w, w, mid, params) > p_e:
            lo = mid
        else:
            hi = mid
    th = 0.5 * (lo + hi)
    te = p_e / w
    return TurbineState(w, w, te / params.K_s, th, th)
