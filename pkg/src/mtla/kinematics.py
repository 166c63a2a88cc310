"""Closed-form motion profiles used to build admissible velocity ranges.

Two profiles are used:

* UAM: constant acceleration from the current speed until the first light.
* UAM+CSM: the same acceleration leg up to the first light, then constant
  speed up to a farther light.

Every profile is parameterised by its target speed ``v_t`` (the speed reached
at the first light), so admissible ranges of different lights can be
intersected directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .scenario import GREEN, RoadLimits

ABS_TOL = 1e-6


class Infeasible(ValueError):
    """The requested profile would need a negative speed or is implausible."""


@dataclass(frozen=True)
class MotionSolution:
    v: float        # initial speed
    a: float
    v_t: float
    t1: float
    t_tot: float
    d1: float
    d2: float = 0.0

    def speed_at(self, t: float) -> float:
        return self.v + self.a * t if t < self.t1 else self.v_t

    def accel_at(self, t: float) -> float:
        return self.a if t < self.t1 else 0.0

    def distance_at(self, t: float) -> float:
        if t < self.t1:
            return self.v * t + 0.5 * self.a * t * t
        return self.d1 + self.v_t * (t - self.t1)


def uam_fixed_time(v: float, d: float, t: float) -> MotionSolution:
    if v < 0 or d <= 0 or t <= 0:
        raise ValueError(f"uam_fixed_time needs v>=0, d>0, t>0 (got {v}, {d}, {t})")
    a = 2.0 * (d - v * t) / (t * t)
    v_t = v + a * t
    if v_t < -1e-12:
        raise Infeasible(f"reaching {d:.3f} m in {t:.3f} s requires stopping first")
    return MotionSolution(v=v, a=a, v_t=max(v_t, 0.0), t1=t, t_tot=t, d1=d)


def uam_fixed_target(v: float, d: float, v_t: float) -> MotionSolution:
    if v < 0 or d <= 0 or v_t < 0:
        raise ValueError(f"uam_fixed_target needs v>=0, d>0, v_t>=0 (got {v}, {d}, {v_t})")
    if v + v_t <= 0:
        raise Infeasible("no motion possible with v = v_t = 0")
    a = (v_t * v_t - v * v) / (2.0 * d)
    t1 = 2.0 * d / (v + v_t)
    return MotionSolution(v=v, a=a, v_t=v_t, t1=t1, t_tot=t1, d1=d)


def _csm_roots(v: float, l1: float, li: float, t_tot: float) -> tuple[float, float]:
    b = li + l1 - t_tot * v
    disc = math.sqrt(b * b + 4.0 * t_tot * v * (li - l1))
    return (b + disc) / (2.0 * t_tot), (b - disc) / (2.0 * t_tot)


def uam_csm_fixed_total_time(v: float, l1: float, li: float, t_tot: float,
                             v_cap: float | None = None) -> MotionSolution:
    """UAM to ``l1`` then constant speed to ``li``, arriving at ``li`` after ``t_tot``."""
    if v < 0 or not 0 < l1 < li or t_tot <= 0:
        raise ValueError(f"uam_csm_fixed_total_time needs v>=0, 0<l1<li, t_tot>0 "
                         f"(got {v}, {l1}, {li}, {t_tot})")
    v_t, other = _csm_roots(v, l1, li, t_tot)
    # product of the roots is -v*(li-l1)/t_tot <= 0: the other root is never a speed
    assert other <= 1e-9 * max(1.0, v_t), "negative root of the UAM+CSM quadratic"
    if v_cap is not None and v_t > v_cap:
        raise Infeasible(f"target speed {v_t:.3f} m/s exceeds bound {v_cap:.3f} m/s")
    t1 = t_tot - (li - l1) / v_t
    if t1 <= 0:
        raise Infeasible("constant-speed leg alone exceeds the total time")
    a = 2.0 * l1 / (t1 * t1) - 2.0 * v / t1
    return MotionSolution(v=v, a=a, v_t=v_t, t1=t1, t_tot=t_tot, d1=l1, d2=li - l1)


def uam_csm_fixed_target(v: float, l1: float, li: float, v_t: float) -> MotionSolution:
    if not 0 < l1 < li or v_t <= 0:
        raise ValueError(f"uam_csm_fixed_target needs 0<l1<li, v_t>0 (got {l1}, {li}, {v_t})")
    leg = uam_fixed_target(v, l1, v_t)
    return MotionSolution(v=v, a=leg.a, v_t=v_t, t1=leg.t1,
                          t_tot=leg.t1 + (li - l1) / v_t, d1=l1, d2=li - l1)


def profile_for_target(v: float, l1: float, li: float, v_t: float) -> MotionSolution:
    """Profile reaching ``v_t`` at the first light and holding it up to ``li``."""
    if li - l1 > ABS_TOL:
        return uam_csm_fixed_target(v, l1, li, v_t)
    return uam_fixed_target(v, l1, v_t)


def _solve_time(v: float, l1: float, li: float, t: float) -> MotionSolution:
    if li - l1 > ABS_TOL:
        return uam_csm_fixed_total_time(v, l1, li, t)
    return uam_fixed_time(v, l1, t)


@dataclass(frozen=True)
class VelocityInterval:
    """Closed interval of target speeds; ``lo > hi`` encodes the empty set."""

    lo: float
    hi: float
    sol_lo: MotionSolution | None = field(default=None, compare=False)
    sol_hi: MotionSolution | None = field(default=None, compare=False)

    @classmethod
    def empty(cls) -> "VelocityInterval":
        return cls(math.inf, -math.inf)

    @property
    def is_empty(self) -> bool:
        return self.lo > self.hi

    def __contains__(self, v: float) -> bool:
        return not self.is_empty and self.lo <= v <= self.hi

    def __bool__(self) -> bool:
        return not self.is_empty

    def closest(self, v: float) -> float:
        if self.is_empty:
            raise ValueError("empty interval")
        return min(max(v, self.lo), self.hi)

    def __repr__(self):
        if self.is_empty:
            return "VelocityInterval(empty)"
        return f"VelocityInterval([{self.lo:.4f}, {self.hi:.4f}])"


def intersect(a: VelocityInterval, b: VelocityInterval) -> VelocityInterval:
    if a.is_empty or b.is_empty:
        return VelocityInterval.empty()
    lo, sol_lo = (a.lo, a.sol_lo) if a.lo >= b.lo else (b.lo, b.sol_lo)
    hi, sol_hi = (a.hi, a.sol_hi) if a.hi <= b.hi else (b.hi, b.sol_hi)
    if lo > hi:
        return VelocityInterval.empty()
    return VelocityInterval(lo, hi, sol_lo, sol_hi)


def arrival_window(color: str, j: int, shifts) -> tuple[float, float]:
    """Arrival time window [earliest, latest] for green phase ``j`` of a light.

    ``shifts`` comes from :func:`mtla.scenario.next_shifts` (times relative to now).
    """
    if color == GREEN:
        if j == 1:
            return 0.0, shifts[0][0]
        if j == 2:
            return shifts[1][0], shifts[2][0]
        raise ValueError("only the first two green phases are considered")
    if j != 1:
        raise ValueError("on red only the first green phase is considered")
    return shifts[0][0], shifts[1][0]


def velocity_range(i: int, j: int, color: str, v: float, l1: float, li: float,
                   shifts, limits: RoadLimits, margin: float = 0.0) -> VelocityInterval:
    """Target speeds that reach light ``i`` during its green phase ``j``.

    ``margin`` shrinks the arrival window on both sides (seconds).  Solver
    infeasibility maps to the empty interval.
    """
    if i < 1:
        raise ValueError("light index starts at 1")
    if i == 1:
        li = l1
    if l1 <= 0 or li < l1 - ABS_TOL:
        raise ValueError(f"bad distances l1={l1}, li={li}")
    t_lo, t_hi = arrival_window(color, j, shifts)
    # the margin only guards actual phase changes, not "now"
    t_lo, t_hi = (t_lo + margin if t_lo > 0 else t_lo), t_hi - margin
    if t_hi <= 0 or t_hi < t_lo:
        return VelocityInterval.empty()

    v_max_road = limits.v_max_road
    # latest arrival -> lowest target speed; arriving before t_hi even when
    # slowing down to zero means there is no lower bound
    try:
        sol_lo = _solve_time(v, l1, li, t_hi)
        lo = sol_lo.v_t
    except Infeasible:
        sol_lo, lo = None, 0.0

    # earliest arrival -> highest target speed, capped by the road limit
    if t_lo <= 0:
        hi = v_max_road
        sol_hi = None
    else:
        try:
            sol_hi = _solve_time(v, l1, li, t_lo)
        except Infeasible:
            return VelocityInterval.empty()
        hi = sol_hi.v_t
        if hi > v_max_road:
            hi, sol_hi = v_max_road, None
    if lo > hi:
        return VelocityInterval.empty()
    if sol_hi is None and hi > 0:
        sol_hi = profile_for_target(v, l1, li, hi)
    if sol_lo is None and lo > 0:
        sol_lo = profile_for_target(v, l1, li, lo)
    return VelocityInterval(lo, hi, sol_lo, sol_hi)
