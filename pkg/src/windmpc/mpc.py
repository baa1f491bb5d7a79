"""Receding-horizon farm controller.

Condenses the per-group lifted linear dynamics into a dense QP over the
stacked power references: rotor-speed smoothness objective, a farm droop
equality at every horizon step, box bounds on the references and rotor-speed
bounds mapped through the models.  Solved by an operator-splitting (ADMM)
method with Ruiz equilibration, active-set polish and infeasibility
detection; a droop fallback covers failed solves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .koopman import LiftedModel


@dataclass(frozen=True)
class MpcConfig:
    """Horizon, droop requirement, bounds and solver settings."""

    horizon: int = 100        # steps
    t_s: float = 0.1          # control step (s)
    k_df: float = 0.2         # speed-droop ratio (p.u./Hz)
    omega_min: float = 0.7    # p.u.
    omega_max: float = 1.3    # p.u.
    p_min: float = 0.0        # p.u.
    p_max: float = 1.0        # p.u.
    omega_margin: float = 0.01  # back-off for lifted-model approximation error
    k_opt: float = 0.5207541542231715  # local MPPT cubic gain
    tol: float = 1e-5         # splitting tolerance; polish tightens the result
    kkt_tol: float = 1e-6     # accepted residual after polish
    max_iter: int = 20000
    warm_start: bool = True

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least one step")
        if self.t_s <= 0.0 or self.tol <= 0.0:
            raise ValueError("t_s and tol must be positive")
        if self.k_df < 0.0:
            raise ValueError("droop ratio must be nonnegative")


@dataclass(frozen=True)
class QpProblem:
    """min 1/2 x'Hx + g'x  s.t.  A_eq x = b_eq, lb <= x <= ub, l_in <= A_in x <= u_in."""

    H: np.ndarray
    g: np.ndarray
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    a_in: np.ndarray | None = None
    l_in: np.ndarray | None = None
    u_in: np.ndarray | None = None

    def __post_init__(self):
        n = self.H.shape[0]
        if self.H.shape != (n, n) or self.g.shape != (n,):
            raise ValueError("cost dimensions inconsistent")
        if not np.allclose(self.H, self.H.T, atol=1e-12):
            raise ValueError("H must be symmetric")
        if (self.a_eq is None) != (self.b_eq is None):
            raise ValueError("a_eq and b_eq must be given together")
        if self.a_eq is not None and self.a_eq.shape[1] != n:
            raise ValueError("a_eq width inconsistent")
        if self.a_in is not None and self.a_in.shape[1] != n:
            raise ValueError("a_in width inconsistent")

    @property
    def n(self) -> int:
        return self.H.shape[0]

    def stacked(self):
        """Constraints as one (C, l, u) block for the splitting solver."""
        n = self.n
        blocks, lows, highs = [], [], []
        if self.a_eq is not None:
            blocks.append(self.a_eq)
            lows.append(self.b_eq)
            highs.append(self.b_eq)
        if self.lb is not None or self.ub is not None:
            blocks.append(np.eye(n))
            lows.append(self.lb if self.lb is not None else np.full(n, -np.inf))
            highs.append(self.ub if self.ub is not None else np.full(n, np.inf))
        if self.a_in is not None:
            blocks.append(self.a_in)
            lows.append(self.l_in if self.l_in is not None
                        else np.full(self.a_in.shape[0], -np.inf))
            highs.append(self.u_in if self.u_in is not None
                         else np.full(self.a_in.shape[0], np.inf))
        if not blocks:
            return np.zeros((0, n)), np.zeros(0), np.zeros(0)
        return np.vstack(blocks), np.concatenate(lows), np.concatenate(highs)


@dataclass(frozen=True)
class QpSolution:
    x: np.ndarray
    y: np.ndarray             # multipliers for the stacked constraint rows
    objective: float
    primal_residual: float
    dual_residual: float
    status: str               # "optimal" | "max_iter" | "infeasible"
    iterations: int


def _impulse_rows(model: LiftedModel, horizon: int):
    """Rotor-speed responses e1' A^j b for both input channels, j = 0..T-1."""
    dim = model.map.dim
    q = np.zeros(dim)
    q[0] = 1.0
    imp_p = np.empty(horizon)
    imp_v = np.empty(horizon)
    qs = np.empty((horizon + 1, dim))
    for j in range(horizon + 1):
        qs[j] = q
        if j < horizon:
            imp_p[j] = q @ model.B[:, 0]
            imp_v[j] = q @ model.B[:, 1]
        q = q @ model.A
    return qs, imp_p, imp_v


def _group_prediction(model: LiftedModel, omega0: float, u0, v_forecast,
                      horizon: int):
    """(G, c): omega_{1..T} = G p + c for one group's reference sequence p."""
    z0 = model.map.lift(omega0, float(u0[0]), float(u0[1]))
    qs, imp_p, imp_v = _impulse_rows(model, horizon)
    free = qs[1:] @ z0  # e1' A^k z0 for k = 1..T
    g_mat = np.zeros((horizon, horizon))
    c = np.empty(horizon)
    for k in range(1, horizon + 1):
        g_mat[k - 1, :k] = imp_p[k - 1::-1]
        c[k - 1] = free[k - 1] + imp_v[:k][::-1] @ v_forecast[:k]
    return g_mat, c


def build_qp(models: list[LiftedModel], init: list[tuple], wind_forecast,
             delta_f: float, p_mppt, config: MpcConfig) -> QpProblem:
    """Condense the farm control problem into a dense QP.

    ``init`` holds per-group (omega_r0, (p_ref0, v_w0)); ``wind_forecast`` is
    a per-group array of at least ``horizon`` wind samples; ``p_mppt`` the
    per-group local MPPT orders the droop deviation is measured against.
    """
    m_groups = len(models)
    t = config.horizon
    n = m_groups * t
    p_mppt = np.asarray(p_mppt, dtype=float)
    if len(init) != m_groups or len(p_mppt) != m_groups:
        raise ValueError("per-group inputs must match the model count")

    # first-difference operator acting on [omega_1..omega_T]
    l_mat = np.eye(t) - np.diag(np.ones(t - 1), -1)

    big_h = np.zeros((n, n))
    big_g = np.zeros(n)
    a_in = np.zeros((n, n))
    l_in = np.empty(n)
    u_in = np.empty(n)
    for i, model in enumerate(models):
        omega0, u0 = init[i]
        forecast = np.asarray(wind_forecast[i], dtype=float)
        if forecast.size < t:
            raise ValueError("wind forecast shorter than the horizon")
        g_mat, c = _group_prediction(model, float(omega0), u0, forecast, t)
        lg = l_mat @ g_mat
        d = l_mat @ c
        d[0] -= float(omega0)
        sl = slice(i * t, (i + 1) * t)
        big_h[sl, sl] = 2.0 * (lg.T @ lg)
        big_g[sl] = 2.0 * (lg.T @ d)
        a_in[sl, sl] = g_mat
        l_in[sl] = config.omega_min + config.omega_margin - c
        u_in[sl] = config.omega_max - config.omega_margin - c

    # farm droop equality at every horizon step
    a_eq = np.zeros((t, n))
    for i in range(m_groups):
        a_eq[:, i * t:(i + 1) * t] = np.eye(t)
    b_eq = np.full(t, float(p_mppt.sum() - config.k_df * delta_f))

    return QpProblem(
        H=big_h, g=big_g, a_eq=a_eq, b_eq=b_eq,
        lb=np.full(n, config.p_min), ub=np.full(n, config.p_max),
        a_in=a_in, l_in=l_in, u_in=u_in)


def _ruiz_scaling(h, g, c_mat, n_iter: int = 10):
    """Symmetric equilibration of the KKT data (OSQP-style)."""
    n = h.shape[0]
    m = c_mat.shape[0]
    d = np.ones(n)
    e = np.ones(m)
    cost = 1.0
    hs, gs, cs = h.copy(), g.copy(), c_mat.copy()
    for _ in range(n_iter):
        col = np.maximum(np.abs(hs).max(axis=0) if n else 0.0,
                         np.abs(cs).max(axis=0) if m else 0.0)
        col[col == 0.0] = 1.0
        dd = 1.0 / np.sqrt(col)
        row = np.abs(cs).max(axis=1) if m else np.zeros(0)
        row[row == 0.0] = 1.0
        ee = 1.0 / np.sqrt(row)
        hs = hs * dd[:, None] * dd[None, :]
        gs = gs * dd
        cs = cs * ee[:, None] * dd[None, :]
        d *= dd
        e *= ee
        # cost equilibration (self-correcting toward unit curvature)
        h_norm = np.abs(hs).max(axis=0).mean() if n else 0.0
        gamma = 1.0 / max(h_norm, np.abs(gs).max(), 1e-8)
        gamma = min(max(gamma, 1e-8), 1e8)
        hs *= gamma
        gs *= gamma
        cost *= gamma
    return hs, gs, cs, d, e, cost


def solve_qp(problem: QpProblem, config: MpcConfig,
             warm: tuple | None = None) -> QpSolution:
    """Operator-splitting solve with adaptive step size and active-set polish.

    Deterministic given inputs; returns a non-optimal status instead of
    raising when the constraint set is infeasible or iterations run out.
    """
    c_mat, low, high = problem.stacked()
    n, m = problem.n, c_mat.shape[0]

    # hot start: when the warm point's active set is still optimal (the common
    # receding-horizon case), one polished KKT solve finishes the job
    if warm is not None and config.warm_start and m:
        x_h, y_h = _polish(problem, c_mat, low, high,
                           np.asarray(warm[0], dtype=float),
                           np.asarray(warm[1], dtype=float))
        if _kkt_ok(problem, c_mat, low, high, x_h, y_h, config.kkt_tol):
            obj = float(0.5 * x_h @ problem.H @ x_h + problem.g @ x_h)
            r_p, r_d = _residuals(problem, c_mat, low, high, x_h, y_h)
            return QpSolution(x=x_h, y=y_h, objective=obj, primal_residual=r_p,
                              dual_residual=r_d, status="optimal", iterations=0)

    hs, gs, cs, d_scale, e_scale, cost = _ruiz_scaling(problem.H, problem.g, c_mat)
    ls = e_scale * low
    us = e_scale * high

    sigma = 1e-6
    relax = 1.6
    eye = np.eye(n)
    is_eq = np.isclose(ls, us)

    rho_base = 0.1

    def factor(rho_val):
        rho_vec = np.where(is_eq, 1e3 * rho_val, rho_val)
        kkt = hs + sigma * eye + (cs.T * rho_vec) @ cs
        try:
            inv = np.linalg.inv(np.linalg.cholesky(kkt))
        except np.linalg.LinAlgError:
            inv = np.linalg.inv(np.linalg.cholesky(kkt + 1e-9 * eye))
        return rho_vec, inv.T @ inv   # KKT inverse from the Cholesky factor

    rho, kkt_inv = factor(rho_base)

    if warm is not None and config.warm_start:
        x = warm[0] / d_scale
        y = warm[1] * cost / e_scale
        z = cs @ x
    else:
        x = np.zeros(n)
        y = np.zeros(m)
        z = np.zeros(m)

    status = "max_iter"
    iterations = config.max_iter
    y_prev = y.copy()
    for it in range(1, config.max_iter + 1):
        rhs = sigma * x - gs + cs.T @ (rho * z - y)
        x_t = kkt_inv @ rhs
        z_t = cs @ x_t
        x = relax * x_t + (1.0 - relax) * x
        z_r = relax * z_t + (1.0 - relax) * z
        z = np.clip(z_r + y / rho, ls, us)
        y = y + rho * (z_r - z)

        if it % 25 == 0 or it == config.max_iter:
            cx = cs @ x
            r_prim = np.abs(cx - z).max() if m else 0.0
            r_dual = np.abs(hs @ x + gs + cs.T @ y).max()
            eps_p = config.tol + config.tol * max(
                np.abs(cx).max() if m else 0.0, np.abs(z).max() if m else 0.0)
            eps_d = config.tol + config.tol * max(
                np.abs(hs @ x).max(), np.abs(cs.T @ y).max() if m else 0.0,
                np.abs(gs).max())
            if r_prim <= eps_p and r_dual <= eps_d:
                status = "optimal"
                iterations = it
                break
            # primal infeasibility certificate from the dual update direction
            dy = y - y_prev
            dy_norm = np.abs(dy).max() if m else 0.0
            if dy_norm > 1e-12:
                dyn = dy / dy_norm
                support = (np.where(us < np.inf, us, 0.0) @ np.maximum(dyn, 0.0)
                           + np.where(ls > -np.inf, ls, 0.0) @ np.minimum(dyn, 0.0))
                if np.abs(cs.T @ dyn).max() <= 1e-10 and support <= -1e-10:
                    status = "infeasible"
                    iterations = it
                    break
            y_prev = y.copy()
            # step-size adaptation toward balanced residuals
            if it % 100 == 0 and r_dual > 0.0 and r_prim > 0.0:
                scale = math.sqrt((r_prim / max(np.abs(cx).max(), 1e-10))
                                  / (r_dual / max(np.abs(hs @ x + gs).max(), 1e-10)))
                if scale > 5.0 or scale < 0.2:
                    rho_base = min(max(rho_base * scale, 1e-6), 1e6)
                    rho, kkt_inv = factor(rho_base)

    x_out = x * d_scale
    y_out = y * e_scale / cost
    if status == "optimal":
        x_out, y_out = _polish(problem, c_mat, low, high, x_out, y_out)
    obj = float(0.5 * x_out @ problem.H @ x_out + problem.g @ x_out)
    r_p, r_d = _residuals(problem, c_mat, low, high, x_out, y_out)
    return QpSolution(x=x_out, y=y_out, objective=obj, primal_residual=r_p,
                      dual_residual=r_d, status=status, iterations=iterations)


def _polish(problem, c_mat, low, high, x, y):
    """Solve the equality-constrained KKT system on the detected active set."""
    cx = c_mat @ x
    slack = max(np.maximum(low - cx, 0.0).max(initial=0.0),
                np.maximum(cx - high, 0.0).max(initial=0.0))
    span = max(1e-7, 10.0 * slack) * (1.0 + np.abs(cx))
    act_lo = (cx - low <= span) & (y <= 0.0)
    act_hi = (high - cx <= span) & (y >= 0.0)
    act_eq = np.isclose(low, high)
    active = act_eq | act_lo | act_hi
    if not active.any():
        x_p = np.linalg.lstsq(problem.H, -problem.g, rcond=None)[0]
        if _better(problem, c_mat, low, high, x_p, np.zeros_like(y), x, y):
            return x_p, np.zeros_like(y)
        return x, y
    c_act = c_mat[active]
    b_act = np.where(act_eq | act_hi, high, low)[active]
    n, k = problem.n, c_act.shape[0]
    kkt = np.zeros((n + k, n + k))
    kkt[:n, :n] = problem.H
    kkt[:n, n:] = c_act.T
    kkt[n:, :n] = c_act
    rhs = np.concatenate([-problem.g, b_act])
    try:
        sol = np.linalg.solve(kkt + 1e-12 * np.eye(n + k), rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    x_p = sol[:n]
    y_p = np.zeros_like(y)
    y_p[active] = sol[n:]
    if _better(problem, c_mat, low, high, x_p, y_p, x, y):
        return x_p, y_p
    return x, y


def _kkt_ok(problem, c_mat, low, high, x, y, tol) -> bool:
    """Full optimality check: residuals plus dual feasibility signs."""
    r_p, r_d = _residuals(problem, c_mat, low, high, x, y)
    if max(r_p, r_d) > tol:
        return False
    cx = c_mat @ x
    ineq = ~np.isclose(low, high)
    lo_ok = (y >= -tol) | (cx - low <= tol)
    hi_ok = (y <= tol) | (high - cx <= tol)
    if not np.all((lo_ok & hi_ok) | ~ineq):
        return False
    comp = np.where(y < 0.0, -y * np.abs(cx - low),
                    np.where(y > 0.0, y * np.abs(high - cx), 0.0))
    comp[~ineq] = 0.0
    return bool(comp.max(initial=0.0) <= tol)


def _residuals(problem, c_mat, low, high, x, y):
    cx = c_mat @ x if c_mat.size else np.zeros(0)
    viol = 0.0
    if cx.size:
        viol = max(np.maximum(low - cx, 0.0).max(), np.maximum(cx - high, 0.0).max())
    dual = problem.H @ x + problem.g
    if c_mat.size:
        dual = dual + c_mat.T @ y
    return float(viol), float(np.abs(dual).max())


def _better(problem, c_mat, low, high, x_new, y_new, x_old, y_old):
    rp_n, rd_n = _residuals(problem, c_mat, low, high, x_new, y_new)
    rp_o, rd_o = _residuals(problem, c_mat, low, high, x_old, y_old)
    return max(rp_n, rd_n) < max(rp_o, rd_o)


def kkt_residuals(problem: QpProblem, solution: QpSolution) -> dict:
    """Independent optimality check of a returned solution.

    Recomputes stationarity, feasibility and complementary slackness from the
    raw problem data; no solver internals are reused.
    """
    c_mat, low, high = problem.stacked()
    x, y = solution.x, solution.y
    cx = c_mat @ x if c_mat.size else np.zeros(0)
    primal = 0.0
    comp = 0.0
    if cx.size:
        primal = max(np.maximum(low - cx, 0.0).max(),
                     np.maximum(cx - high, 0.0).max())
        lo_gap = np.where(low > -np.inf, cx - low, np.inf)
        hi_gap = np.where(high < np.inf, high - cx, np.inf)
        comp_terms = np.where(y < 0.0, np.abs(y) * np.abs(lo_gap),
                              np.where(y > 0.0, y * np.abs(hi_gap), 0.0))
        comp_terms[np.isclose(low, high)] = 0.0  # equalities: any sign
        comp = float(comp_terms.max())
    stat = problem.H @ x + problem.g
    if c_mat.size:
        stat = stat + c_mat.T @ y
    return {
        "stationarity": float(np.abs(stat).max()),
        "primal": float(primal),
        "complementarity": comp,
    }


def droop_reference(p_mppt, delta_f: float, shares, k_df: float,
                    p_min: float, p_max: float) -> np.ndarray:
    """Local proportional allocation of the farm droop requirement."""
    p_mppt = np.asarray(p_mppt, dtype=float)
    shares = np.asarray(shares, dtype=float)
    if abs(shares.sum() - 1.0) > 1e-9:
        raise ValueError("shares must sum to one")
    return np.clip(p_mppt - shares * k_df * delta_f, p_min, p_max)


class MpcController:
    """Receding-horizon dispatcher with warm starting and a dispatch log."""

    def __init__(self, models: list[LiftedModel], config: MpcConfig):
        self.models = models
        self.config = config
        self._warm = None
        self.log: list[dict] = []

    def step(self, measurements: list[tuple], delta_f: float,
             t_now: float = 0.0, last_p_ref=None):
        """One dispatch: solve the QP and return first-step references.

        ``measurements`` holds per-group (omega_r, v_w).  Falls back to the
        local droop split (flagged in the log) when the solve fails.
        """
        cfg = self.config
        m = len(self.models)
        t = cfg.horizon
        p_mppt = np.array([min(max(cfg.k_opt * w ** 3, cfg.p_min), cfg.p_max)
                           for w, _ in measurements])
        if last_p_ref is None:
            last_p_ref = p_mppt
        init = [(measurements[i][0], (float(last_p_ref[i]), measurements[i][1]))
                for i in range(m)]
        forecast = [np.full(t, measurements[i][1]) for i in range(m)]
        problem = build_qp(self.models, init, forecast, delta_f, p_mppt, cfg)
        sol = solve_qp(problem, cfg, warm=self._warm)
        fallback = sol.status != "optimal"
        if fallback:
            p_ref = droop_reference(p_mppt, delta_f, np.full(m, 1.0 / m),
                                    cfg.k_df, cfg.p_min, cfg.p_max)
            self._warm = None
        else:
            p_ref = np.array([sol.x[i * t] for i in range(m)])
            if cfg.warm_start:
                shifted = sol.x.reshape(m, t)
                shifted = np.column_stack([shifted[:, 1:], shifted[:, -1]])
                self._warm = (shifted.ravel(), sol.y)
        self.log.append({
            "t": t_now, "delta_f": delta_f, "p_ref": p_ref.copy(),
            "status": sol.status, "iterations": sol.iterations,
            "fallback": fallback,
        })
        return p_ref, sol


def mpc_step(models: list[LiftedModel], measurements: list[tuple],
             delta_f: float, config: MpcConfig):
    """Single cold-start dispatch (see :class:`MpcController` for loops)."""
    return MpcController(models, config).step(measurements, delta_f)
