"""Optimal advisor: jerk-penalising receding-horizon refinement of the advice.

The non-optimal plan is the reference.  Traffic lights enter only through
time-varying bounds on the position, and the force needed by the
longitudinal model has to stay within the traction/braking limits.

Transcription: uniform grid, jerk held constant per step, position, speed and
acceleration propagated exactly, so they are affine in the jerk sequence.  The
only nonlinearity (aerodynamic drag inside the force bounds) is linearised
around the previous iterate and the resulting QP is re-solved to a fixed
point.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .advisor import Advice, VehicleState, classify, lights_ahead
from .qp import solve_qp
from .scenario import GREEN, MpcSettings, PhaseSchedule, Scenario, VehicleParams, next_shifts, phase_at

log = logging.getLogger(__name__)

INF = math.inf


class InfeasibleRegion(ValueError):
    """The admissible time-space region is empty somewhere in the horizon."""


@dataclass(frozen=True)
class PositionBounds:
    """Piecewise-constant position bounds; interval k is [breakpoints[k], breakpoints[k+1])."""

    breakpoints: tuple[float, ...]
    s_min: tuple[float, ...]
    s_max: tuple[float, ...]

    def __post_init__(self):
        if len(self.breakpoints) != len(self.s_min) + 1 or len(self.s_min) != len(self.s_max):
            raise ValueError("breakpoints must have one entry more than the bound lists")
        if any(b <= a for a, b in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("breakpoints must be strictly increasing")

    @classmethod
    def free(cls, t_f: float) -> "PositionBounds":
        return cls((0.0, t_f), (-INF,), (INF,))

    @property
    def t_f(self) -> float:
        return self.breakpoints[-1]

    def interval(self, t: float) -> int:
        for k in range(len(self.s_min) - 1, -1, -1):
            if t >= self.breakpoints[k]:
                return k
        return 0

    def at(self, t: float) -> tuple[float, float]:
        k = self.interval(t)
        return self.s_min[k], self.s_max[k]

    def on_grid(self, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Grid-point bounds that keep the continuous path inside the region.

        With v >= 0 the position is non-decreasing, so s(t_k) bounding the
        upper limit over (t_{k-1}, t_k] and s(t_k) bounding the lower limit
        over [t_k, t_{k+1}) is sufficient.
        """
        n = len(times)
        lo = np.full(n, -INF)
        hi = np.full(n, INF)
        bp = self.breakpoints
        n_iv = len(self.s_min)
        for k in range(n):
            t = times[k]
            for m in range(n_iv):
                a, b = bp[m], bp[m + 1]
                covers_t = a <= t and (t < b or m == n_iv - 1)
                if covers_t or (k > 0 and a <= t and b > times[k - 1]):
                    hi[k] = min(hi[k], self.s_max[m])
                if covers_t or (k < n - 1 and a < times[k + 1] and b > t):
                    lo[k] = max(lo[k], self.s_min[m])
        return lo, hi


def _merge(pieces: list[list[tuple[float, float, float, float]]], t_f: float) -> PositionBounds:
    cuts = {0.0, t_f}
    for p in pieces:
        for a, b, _, _ in p:
            cuts.update((a, b))
    bp = sorted(c for c in cuts if 0.0 <= c <= t_f)
    lo, hi = [], []
    for a, b in zip(bp, bp[1:]):
        mid = 0.5 * (a + b)
        l, h = -INF, INF
        for p in pieces:
            for pa, pb, pl, ph in p:
                if pa <= mid < pb:
                    l, h = max(l, pl), min(h, ph)
        if l > h:
            raise InfeasibleRegion(f"empty position range on [{a:.3f}, {b:.3f}) s")
        lo.append(l)
        hi.append(h)
    # merge identical neighbours
    out_bp, out_lo, out_hi = [bp[0]], [], []
    for k, (l, h) in enumerate(zip(lo, hi)):
        if out_lo and out_lo[-1] == l and out_hi[-1] == h:
            out_bp[-1] = bp[k + 1]
            continue
        out_lo.append(l)
        out_hi.append(h)
        out_bp.append(bp[k + 1])
    return PositionBounds(tuple(out_bp), tuple(out_lo), tuple(out_hi))


def _light_pieces(tl: PhaseSchedule, i: int, t_now: float, t_f: float, advice: Advice):
    x = tl.stop_line_abscissa
    t_shift = next_shifts(tl, t_now, 1)[0][0]
    if phase_at(tl, t_now) != GREEN:
        if t_shift >= t_f:
            return [(0.0, t_f, -INF, x)]
        return [(0.0, t_shift, -INF, x)]
    if t_shift > t_f:
        return []
    j = advice.plan[i - 1] if i <= len(advice.plan) else advice.n_pass
    if advice.n_green < i or j > 1:
        return [(t_shift, t_f, -INF, x)]      # still before the line once it turns red
    return [(t_shift, t_f, x, INF)]           # already past the line when it turns red


def position_bounds(s0: float, lights, t_now: float, t_f: float, advice: Advice) -> PositionBounds:
    """Admissible position region for the next ``t_f`` seconds from up to two lights."""
    pieces = []
    for i, tl in enumerate(list(lights)[:2], start=1):
        if tl.stop_line_abscissa <= s0:
            continue
        pieces.append(_light_pieces(tl, i, t_now, t_f, advice))
    return _merge(pieces, t_f)


@dataclass(frozen=True)
class OcpConfig:
    t_f: float = 6.0
    n_steps: int = 30
    w_v: float = 1.0
    w_a: float = 1.0
    w_j: float = 10.0
    tol: float = 1e-6
    max_iter: int = 60        # interior point iterations per QP
    max_outer: int = 8        # drag linearisation passes

    def __post_init__(self):
        if self.t_f <= 0 or self.n_steps < 1:
            raise ValueError("need t_f > 0 and n_steps >= 1")
        if min(self.w_v, self.w_a) < 0 or self.w_j <= 0:
            raise ValueError("weights must be >= 0 with w_j > 0")

    @property
    def dt(self) -> float:
        return self.t_f / self.n_steps

    @classmethod
    def from_settings(cls, m: MpcSettings) -> "OcpConfig":
        return cls(t_f=m.t_f, n_steps=m.n_steps, w_v=m.w_v, w_a=m.w_a, w_j=m.w_j,
                   tol=m.tol, max_iter=m.max_iter)


@dataclass
class OcpSolution:
    t: np.ndarray
    s: np.ndarray
    v: np.ndarray
    a: np.ndarray
    j: np.ndarray         # n_steps entries, constant over each step
    F: np.ndarray
    objective: float
    status: str           # "optimal" | "max-iter" | "infeasible"
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def accel_at(self, tau: float) -> float:
        dt = self.t[1] - self.t[0]
        k = min(max(int(tau // dt), 0), len(self.j) - 1)
        return float(self.a[k] + self.j[k] * (tau - self.t[k]))


@lru_cache(maxsize=16)
def _propagation(n: int, dt: float):
    """Affine maps from the jerk sequence to s, v, a at the n+1 grid points.

    Returns (Ps, Pv, Pa), each (n+1, n), plus the free responses as functions
    of the initial state through the coefficient arrays (cs, cv, ca).
    """
    Pa = np.zeros((n + 1, n))
    Pv = np.zeros((n + 1, n))
    Ps = np.zeros((n + 1, n))
    for k in range(n):
        Pa[k + 1] = Pa[k]
        Pv[k + 1] = Pv[k] + Pa[k] * dt
        Ps[k + 1] = Ps[k] + Pv[k] * dt + Pa[k] * dt * dt / 2
        Pa[k + 1, k] += dt
        Pv[k + 1, k] += dt * dt / 2
        Ps[k + 1, k] += dt ** 3 / 6
    tk = np.arange(n + 1) * dt
    for arr in (Pa, Pv, Ps):
        arr.setflags(write=False)
    return Ps, Pv, Pa, tk


def free_response(x0, n: int, dt: float):
    s0, v0, a0 = x0
    tk = np.arange(n + 1) * dt
    return s0 + v0 * tk + 0.5 * a0 * tk ** 2, v0 + a0 * tk, np.full(n + 1, float(a0))


def simulate_jerk(x0, jerk, dt: float):
    """Exact integration of a piecewise-constant jerk sequence."""
    s, v, a = (float(x) for x in x0)
    S, V, A = [s], [v], [a]
    for j in jerk:
        s, v, a = (s + v * dt + a * dt * dt / 2 + j * dt ** 3 / 6,
                   v + a * dt + j * dt * dt / 2,
                   a + j * dt)
        S.append(s)
        V.append(v)
        A.append(a)
    return np.array(S), np.array(V), np.array(A)


def trapezoid_weights(n: int, dt: float) -> np.ndarray:
    w = np.full(n + 1, dt)
    w[0] = w[-1] = dt / 2
    return w


def objective(v, a, jerk, v_ref, a_ref, cfg: OcpConfig) -> float:
    """Discretised tracking + jerk cost (trapezoid on states, rectangle on jerk)."""
    w = trapezoid_weights(len(jerk), cfg.dt)
    track = cfg.w_v * (np.asarray(v) - v_ref) ** 2 + cfg.w_a * (np.asarray(a) - a_ref) ** 2
    return float(w @ track + cfg.dt * cfg.w_j * np.sum(np.asarray(jerk) ** 2))


def solve_ocp(x0, v_ref, a_ref, bounds: PositionBounds | None, params: VehicleParams,
              cfg: OcpConfig = OcpConfig(), warm_v: np.ndarray | None = None) -> OcpSolution:
    """Minimum-jerk reference tracking over the prediction horizon.

    ``x0`` is (s0, v0, a0); ``v_ref``/``a_ref`` are sampled at the n_steps+1
    grid points; ``warm_v`` is an optional speed trajectory used as the first
    drag linearisation point.
    """
    n, dt = cfg.n_steps, cfg.dt
    s0, v0, a0 = (float(x) for x in x0)
    v_ref = np.broadcast_to(np.asarray(v_ref, dtype=float), (n + 1,))
    a_ref = np.broadcast_to(np.asarray(a_ref, dtype=float), (n + 1,))
    Ps, Pv, Pa, tk = _propagation(n, dt)
    # positions relative to s0 keep the numbers small
    cs, cv, ca = free_response((0.0, v0, a0), n, dt)

    w = trapezoid_weights(n, dt)
    Hv = (Pv.T * (w * cfg.w_v)) @ Pv
    Ha = (Pa.T * (w * cfg.w_a)) @ Pa
    H = 2.0 * (Hv + Ha + dt * cfg.w_j * np.eye(n))
    g = 2.0 * ((Pv.T * (w * cfg.w_v)) @ (cv - v_ref) + (Pa.T * (w * cfg.w_a)) @ (ca - a_ref))

    lin_rows, lin_rhs = [], []

    def add(rows, rhs):
        lin_rows.append(np.atleast_2d(rows))
        lin_rhs.append(np.atleast_1d(rhs))

    eye = np.eye(n)
    add(eye, np.full(n, params.j_max))
    add(-eye, np.full(n, -params.j_min))
    add(Pa[1:], params.a_max - ca[1:])
    add(-Pv[1:], cv[1:])
    if bounds is not None:
        lo, hi = bounds.on_grid(tk)
        lo, hi = lo - s0, hi - s0
        for k in range(1, n + 1):
            if math.isfinite(hi[k]):
                add(Ps[k], hi[k] - cs[k])
            if math.isfinite(lo[k]):
                add(-Ps[k], -(lo[k] - cs[k]))
    G_fixed = np.vstack(lin_rows)
    h_fixed = np.concatenate(lin_rhs)

    c, R, m = params.drag_coeff, params.rolling_force, params.m
    v_bar = np.asarray(warm_v, dtype=float)[: n + 1] if warm_v is not None else None
    if v_bar is None or v_bar.shape != (n + 1,):
        v_bar = np.maximum(v_ref, 0.0).copy()
        v_bar[0] = v0

    status, iters, jerk = "infeasible", 0, np.zeros(n)
    for outer in range(cfg.max_outer):
        # F_k ~ m*a_k + c*(2*vb*v_k - vb^2) + R
        vb = v_bar[1:]
        dF = m * Pa[1:] + (2 * c * vb)[:, None] * Pv[1:]
        F_free = m * ca[1:] + c * (2 * vb * cv[1:] - vb ** 2) + R
        G = np.vstack([G_fixed, dF, -dF])
        h = np.concatenate([h_fixed, params.F_max - F_free, -(params.F_min - F_free)])
        norms = np.linalg.norm(G, axis=1)
        norms[norms == 0] = 1.0
        res = solve_qp(H, g, G / norms[:, None], h / norms, tol=min(cfg.tol, 1e-8),
                       max_iter=cfg.max_iter)
        iters += res.iterations
        status = res.status
        jerk = res.x
        if status == "infeasible":
            break
        v_new = cv + Pv @ jerk
        delta = float(np.max(np.abs(v_new - v_bar)))
        v_bar = v_new
        log.debug("ocp outer %d: qp %s in %d its, dv %.2e", outer, status, res.iterations, delta)
        if delta < 1e-6:
            break

    s = s0 + cs + Ps @ jerk
    v = cv + Pv @ jerk
    a = ca + Pa @ jerk
    F = params.force(a, v)
    if status != "infeasible":
        viol = _violation(s, v, a, jerk, F, bounds, params, tk)
        if viol > 1e-4:
            log.debug("ocp solution violates constraints by %.3e", viol)
            status = "infeasible" if viol > 1e-2 else "max-iter"
    return OcpSolution(tk.copy(), s, v, a, jerk, F, objective(v, a, jerk, v_ref, a_ref, cfg),
                       status, iters)


def _violation(s, v, a, jerk, F, bounds, params, tk) -> float:
    worst = max(0.0, float(np.max(jerk - params.j_max)), float(np.max(params.j_min - jerk)),
                float(np.max(a[1:] - params.a_max)), float(np.max(-v[1:])))
    # force limits in acceleration units
    worst = max(worst, float(np.max(F[1:] - params.F_max)) / params.m,
                float(np.max(params.F_min - F[1:])) / params.m)
    if bounds is not None:
        lo, hi = bounds.on_grid(tk)
        worst = max(worst, float(np.max((s - hi)[1:])), float(np.max((lo - s)[1:])))
    return worst


def sample_reference(advice: Advice, v0: float, times) -> tuple[np.ndarray, np.ndarray]:
    ref = [advice.reference(v0, t) for t in times]
    return np.array([r[0] for r in ref]), np.array([r[1] for r in ref])


class MpcPlanner:
    """Receding-horizon solver holding the warm start of one vehicle."""

    def __init__(self, scenario: Scenario, cfg: OcpConfig | None = None):
        self.scenario = scenario
        self.cfg = cfg or OcpConfig.from_settings(scenario.mpc)
        self._warm: tuple[float, np.ndarray] | None = None
        self.last: OcpSolution | None = None

    def reset(self):
        self._warm = None
        self.last = None

    def solve(self, state: VehicleState, base: Advice) -> OcpSolution | None:
        cfg = self.cfg
        try:
            bounds = position_bounds(state.s, lights_ahead(state.s, self.scenario.lights),
                                     state.t, cfg.t_f, base)
        except InfeasibleRegion as exc:
            log.debug("no admissible region: %s", exc)
            self._warm = None
            return None
        tk = np.arange(cfg.n_steps + 1) * cfg.dt
        v_ref, a_ref = sample_reference(base, state.v, tk)
        warm = None
        if self._warm is not None:
            # previous plan shifted by the time elapsed since it was computed
            t_prev, v_prev = self._warm
            warm = np.interp(tk + (state.t - t_prev), tk, v_prev)
        sol = solve_ocp((state.s, state.v, state.a), v_ref, a_ref, bounds,
                        self.scenario.vehicle, cfg, warm_v=warm)
        if sol.status == "infeasible":
            self._warm = None
            return None
        self._warm = (state.t, sol.v)
        self.last = sol
        return sol

    def advise(self, state: VehicleState, base: Advice) -> Advice:
        sol = self.solve(state, base)
        if sol is None:
            return replace(base, mpc_fallback=True)
        v_ref = float(sol.v[-1])
        warning = classify(v_ref, state.v)
        if base.warning.value == "red_sound":
            warning = base.warning
        return replace(base, a_ref=float(sol.a[1]), v_ref=v_ref, warning=warning)


def optimal_advise(state: VehicleState, scenario: Scenario, base: Advice,
                   planner: MpcPlanner | None = None) -> Advice:
    return (planner or MpcPlanner(scenario)).advise(state, base)
