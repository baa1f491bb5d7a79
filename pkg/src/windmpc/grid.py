"""Aggregate grid-frequency model.

Single-bus system-frequency-response stand-in for a small network: one
equivalent synchronous machine (swing equation) with a transient-droop hydro
governor and a frequency-dependent load, plus the wind-farm injection.  All
powers are per-unit on ``S_base``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import _kernels
from .errors import DivergenceError, DomainError


@dataclass(frozen=True)
class GovernorParams:
    """Classic hydro governor: gate servo, transient droop, water column."""

    r_p: float = 0.05    # permanent droop (p.u.)
    r_t: float = 2.0     # transient droop (p.u.)
    t_r: float = 30.0    # reset time (s)
    t_w: float = 1.0     # water starting time (s)
    t_g: float = 0.2     # gate servo time constant (s)
    gate_min: float = 0.0
    gate_max: float = 0.62

    def __post_init__(self):
        for name in ("r_p", "r_t", "t_r", "t_w", "t_g"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if self.gate_min >= self.gate_max:
            raise ValueError("gate_min must be below gate_max")


@dataclass(frozen=True)
class GridParams:
    """Equivalent single-machine system on a common MVA base.

    The defaults were fixed once by the documented calibration run
    (``scripts/calibrate.py``) so that the no-support frequency nadir of the
    reference load-step scenario lands at its target.
    """

    f_nom: float = 50.0     # Hz
    H_sys: float = 0.8      # equivalent inertia constant (s, on S_base)
    D: float = 0.3          # load damping (p.u. / p.u.-freq)
    S_base: float = 425.0   # MVA
    governor: GovernorParams = GovernorParams()
    P_load0: float = 0.80   # initial load (p.u.)

    def __post_init__(self):
        if self.H_sys <= 0.0 or self.f_nom <= 0.0 or self.S_base <= 0.0:
            raise ValueError("H_sys, f_nom and S_base must be strictly positive")
        if self.D < 0.0:
            raise ValueError("load damping must be nonnegative")

    def kernel_args(self) -> tuple:
        g = self.governor
        return (self.f_nom, 2.0 * self.H_sys, self.D,
                g.r_p, g.r_t, g.t_r, g.t_w, g.t_g, g.gate_min, g.gate_max)


@dataclass(frozen=True)
class GridState:
    """Frequency plus governor states (deviations around the initial dispatch)."""

    f: float               # system frequency (Hz)
    comp: float = 0.0      # transient-droop compensator state
    gate: float = 0.0      # gate deviation from initial opening
    water: float = 0.0     # water-column state
    p_mech0: float = 0.0   # initial governor mechanical power (p.u.)

    @property
    def p_mech(self) -> float:
        """Governor mechanical power (p.u.): inverse response on gate moves."""
        return self.p_mech0 + 3.0 * self.water - 2.0 * self.gate


def equilibrium_state(params: GridParams, p_wind0: float) -> GridState:
    """Initial grid state with the synchronous machine balancing the load."""
    p_mech0 = params.P_load0 - p_wind0
    if not (params.governor.gate_min <= p_mech0 <= params.governor.gate_max):
        raise DomainError(
            f"initial machine dispatch {p_mech0:.3f} p.u. outside gate limits")
    return GridState(f=params.f_nom, p_mech0=p_mech0)


def grid_step(state: GridState, p_wind: float, p_load: float, dt: float,
              params: GridParams, dt_max: float = 0.01) -> GridState:
    """Advance frequency and governor one step of ``dt`` seconds."""
    if dt <= 0.0:
        raise DomainError("dt must be positive")
    nsub = max(1, math.ceil(dt / dt_max - 1e-12))
    f, comp, gate, water = _kernels.grid_step_raw(
        state.f, state.comp, state.gate, state.water, state.p_mech0,
        p_wind, p_load, dt, nsub, *params.kernel_args())
    if abs(f - params.f_nom) > 5.0:
        raise DivergenceError(f"frequency deviation left +-5 Hz: f={f:.3f}")
    return GridState(f, comp, gate, water, state.p_mech0)
