"""Non-optimal multiple traffic light advisor.

The advisor looks at up to four lights ahead, builds for each one the range
of target speeds that reaches it on green, intersects the ranges light after
light and keeps the plan for the farthest light that can still be passed.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

from .kinematics import (
    Infeasible,
    MotionSolution,
    VelocityInterval,
    intersect,
    profile_for_target,
    uam_fixed_target,
    velocity_range,
)
from .scenario import GREEN, RED, PathGeometry, PhaseSchedule, Scenario, next_shifts, phase_at

MAX_LIGHTS = 4
MAX_GREEN_PHASE = 2


class WarningLevel(str, enum.Enum):
    NONE = "none"
    GREEN = "green"          # speed up
    RED = "red"              # slow down
    RED_SOUND = "red_sound"  # about to run a red light

    def __str__(self):
        return self.value


class OffPathError(ValueError):
    pass


@dataclass(frozen=True)
class VehicleState:
    s: float
    v: float
    t: float
    a: float = 0.0
    X: float | None = None
    Y: float | None = None
    Psi: float | None = None


@dataclass(frozen=True)
class Advice:
    warning: WarningLevel
    v_ref: float
    a_ref: float
    v_adm: VelocityInterval
    n_green: int = 0
    n_pass: int = 1
    plan: tuple[int, ...] = ()          # green phase targeted at each passable light
    motion: MotionSolution | None = None
    fallback: bool = False              # full stop (or relaunch) instead of a green plan
    active: bool = True
    mpc_fallback: bool = False          # optimal layer could not improve this advice

    def reference(self, v0: float, t: float) -> tuple[float, float]:
        """Reference (speed, acceleration) ``t`` seconds after the advice was issued."""
        if self.motion is not None:
            return self.motion.speed_at(t), self.motion.accel_at(t)
        if self.a_ref == 0.0:
            return v0, 0.0
        t_end = (self.v_ref - v0) / self.a_ref
        if t < t_end:
            return v0 + self.a_ref * t, self.a_ref
        return self.v_ref, 0.0


def classify(v_ref: float, v: float, eps: float = 0.1) -> WarningLevel:
    if v_ref > v + eps:
        return WarningLevel.GREEN
    if v_ref < v - eps:
        return WarningLevel.RED
    return WarningLevel.NONE


def localize(x: float, y: float, path: PathGeometry, tol: float = 10.0) -> float:
    """Arclength of the orthogonal projection of (x, y) onto the path polyline."""
    best_d, best_s = math.inf, 0.0
    s0 = 0.0
    for (x0, y0), (x1, y1) in zip(path.waypoints, path.waypoints[1:]):
        dx, dy = x1 - x0, y1 - y0
        seg = math.hypot(dx, dy)
        u = min(max(((x - x0) * dx + (y - y0) * dy) / (seg * seg), 0.0), 1.0)
        d = math.hypot(x - (x0 + u * dx), y - (y0 + u * dy))
        if d < best_d - 1e-12:
            best_d, best_s = d, s0 + u * seg
        s0 += seg
    if best_d > tol:
        raise OffPathError(f"point ({x:g}, {y:g}) is {best_d:.2f} m from the path (tolerance {tol:g} m)")
    return best_s


def lights_ahead(s: float, lights) -> list[PhaseSchedule]:
    return [tl for tl in lights if tl.stop_line_abscissa > s]


def activation_check(s: float, lights, horizon: float, latched: bool = False) -> list[PhaseSchedule]:
    """Lights the advisor has to analyze at abscissa ``s`` (empty when inactive)."""
    if horizon <= 0:
        raise ValueError("horizon must be > 0")
    ahead = lights_ahead(s, lights)[:MAX_LIGHTS]
    if not ahead:
        return []
    if latched or ahead[0].stop_line_abscissa - s < horizon:
        return ahead
    return []


def escalate(advice: Advice, state: VehicleState, first_light: PhaseSchedule | None,
             d_comfort: float = 1.0, urgency: float = 1.0) -> WarningLevel:
    """Upgrade a red warning to red+sound when the stop can no longer be comfortable."""
    if advice.warning != WarningLevel.RED or first_light is None:
        return advice.warning
    dist = first_light.stop_line_abscissa - state.s
    if dist <= 0:
        return advice.warning
    red_now = phase_at(first_light, state.t) == RED
    red_later = state.v > 0 and phase_at(first_light, state.t + dist / state.v) == RED
    if (red_now or red_later) and dist < urgency * 0.5 * state.v ** 2 / d_comfort:
        return WarningLevel.RED_SOUND
    return advice.warning


def _full_stop(v: float, l1: float, stop_gap: float) -> tuple[float, MotionSolution | None]:
    d = l1 - stop_gap
    if v <= 0:
        return 0.0, None
    if d <= 1e-3:
        return -v / 0.05, None  # as hard as possible; the plant saturates it
    sol = uam_fixed_target(v, d, 0.0)
    return sol.a, sol


@dataclass
class Advisor:
    """Stateful wrapper around :meth:`advise` holding the activation latch.

    One instance per simulated vehicle.
    """

    scenario: Scenario
    margin: float = 1.0          # seconds kept clear of every phase change
    a_comf: float = 1.5          # comfortable deceleration magnitude
    a_launch: float = 1.0        # relaunch acceleration from (near) standstill
    eps: float = 0.1             # warning dead band, m/s
    stop_gap: float = 0.5        # stop this far before the stop line
    _latch_until: float = field(default=-math.inf, repr=False)

    @property
    def latched(self) -> bool:
        return self._latch_until > -math.inf

    def reset(self):
        self._latch_until = -math.inf

    @property
    def v_cruise(self) -> float:
        lim = self.scenario.limits
        return min(max(self.scenario.initial_speed, lim.v_min_road), lim.v_max_road)

    def _cruise(self, state: VehicleState, road: VelocityInterval) -> Advice:
        # no light to plan for: settle back on the cruise speed
        lim = self.scenario.limits
        a = min(max(self.v_cruise - state.v, -lim.d_comfort), self.a_launch)
        warning = classify(self.v_cruise, state.v, self.eps)
        v_ref = state.v if warning == WarningLevel.NONE else self.v_cruise
        return Advice(warning, v_ref, a, road, active=False)

    def analyzed_lights(self, s: float) -> list[PhaseSchedule]:
        if s >= self._latch_until:
            self._latch_until = -math.inf
        lights = activation_check(s, self.scenario.lights, self.scenario.limits.horizon_multi,
                                  latched=self.latched)
        if lights and not self.latched:
            self._latch_until = lights[-1].stop_line_abscissa
        return lights

    def advise(self, state: VehicleState) -> Advice:
        lights = self.analyzed_lights(state.s)
        limits = self.scenario.limits
        road = VelocityInterval(limits.v_min_road, limits.v_max_road)
        if not lights:
            return self._cruise(state, road)
        advice = plan_lights(state, lights, self.scenario, self)
        first = lights[0]
        warning = escalate(advice, state, first, limits.d_comfort)
        if warning != advice.warning:
            advice = replace(advice, warning=warning)
        return advice



def _amc_ok(sol: MotionSolution, cfg: Advisor, a_max: float, limits) -> bool:
    if sol.a < 0 and -sol.a > cfg.a_comf + 1e-12:
        return False
    if sol.a > a_max + 1e-12:
        return False
    return limits.v_min_road - 1e-9 <= sol.v_t <= limits.v_max_road + 1e-9


def plan_lights(state: VehicleState, lights, scenario: Scenario, cfg: Advisor) -> Advice:
    """The per-light / per-green-phase feasibility loop."""
    limits = scenario.limits
    a_max = scenario.vehicle.a_max
    v, t = state.v, state.t
    l1 = lights[0].stop_line_abscissa - state.s
    adm_prev = VelocityInterval(limits.v_min_road, limits.v_max_road)
    stored: Advice | None = None
    plan: list[int] = []

    for i, tl in enumerate(lights, start=1):
        li = tl.stop_line_abscissa - state.s
        color = phase_at(tl, t)
        shifts = next_shifts(tl, t, 3)
        phases = range(1, MAX_GREEN_PHASE + 1) if color == GREEN else (1,)
        accepted = None
        for j in phases:
            req = velocity_range(i, j, color, v, l1, li, shifts, limits, margin=cfg.margin)
            adm = intersect(req, adm_prev)
            if adm.is_empty:
                continue
            if v in adm:
                # actual velocity check: keep the current speed
                motion = profile_for_target(v, l1, li, v) if v > 0 else None
                accepted = (adm, j, WarningLevel.NONE, v, 0.0, motion)
                break
            # maneuver check on the endpoint closest to the current speed
            v_t = adm.closest(v)
            try:
                sol = profile_for_target(v, l1, li, v_t)
            except Infeasible:
                continue
            if _amc_ok(sol, cfg, a_max, limits):
                accepted = (adm, j, classify(v_t, v, cfg.eps), v_t, sol.a, sol)
                break
        if accepted is None:
            break
        adm, j, warning, v_ref, a_ref, motion = accepted
        plan.append(j)
        adm_prev = adm
        stored = Advice(warning, v_ref, a_ref, adm, n_green=i, n_pass=j,
                        plan=tuple(plan), motion=motion)

    if stored is not None:
        return stored
    return _fallback(state, lights[0], l1, scenario, cfg)


def _fallback(state: VehicleState, first: PhaseSchedule, l1: float, scenario: Scenario,
              cfg: Advisor) -> Advice:
    limits = scenario.limits
    v, t = state.v, state.t
    empty = VelocityInterval.empty()
    if phase_at(first, t) == GREEN:
        t_red = next_shifts(first, t, 1)[0][0]
        if v < limits.v_min_road:
            # relaunch: the light can be reached on green accelerating at a_launch
            if t_red > 2 * cfg.margin and \
                    _launch_time(v, l1, cfg.a_launch, limits.v_min_road) < t_red - 2 * cfg.margin:
                return Advice(classify(limits.v_min_road, v, cfg.eps), limits.v_min_road,
                              cfg.a_launch, empty, fallback=True)
        elif l1 / v < t_red:
            # too late to plan with the margin, but the line is cleared on
            # green anyway: braking now would be the worse choice
            return Advice(WarningLevel.NONE, v, 0.0, empty, fallback=True,
                          motion=uam_fixed_target(v, l1, v))
    a_stop, motion = _full_stop(v, l1, cfg.stop_gap)
    return Advice(classify(0.0, v, cfg.eps), 0.0, a_stop, empty, fallback=True, motion=motion)


def _launch_time(v: float, d: float, a: float, v_cruise: float) -> float:
    """Time to cover ``d`` accelerating at ``a`` from ``v`` up to ``v_cruise``."""
    t_acc = max(v_cruise - v, 0.0) / a
    d_acc = v * t_acc + 0.5 * a * t_acc ** 2
    if d <= d_acc:
        return (-v + math.sqrt(v * v + 2 * a * d)) / a
    return t_acc + (d - d_acc) / v_cruise


def advise(state: VehicleState, scenario: Scenario, latched: bool = False, **kw) -> Advice:
    """One-shot advice without a persistent latch (see :class:`Advisor`)."""
    adv = Advisor(scenario, **kw)
    if latched:
        ahead = lights_ahead(state.s, scenario.lights)[:MAX_LIGHTS]
        if ahead:
            adv._latch_until = ahead[-1].stop_line_abscissa
    return adv.advise(state)
