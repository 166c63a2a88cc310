"""Closed-loop corridor simulation of baseline and advised drivers."""
from __future__ import annotations

import csv
import enum
import hashlib
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .advisor import Advice, Advisor, VehicleState, WarningLevel, _launch_time, lights_ahead
from .mpc import MpcPlanner, OcpSolution
from .scenario import GREEN, RED, Scenario, VehicleParams, next_shifts, phase_at

log = logging.getLogger(__name__)

J_PER_M_TO_KWH_PER_100KM = 100_000 / 3.6e6
STOP_SPEED = 0.1
STOP_DURATION = 1.0


class DriverKind(str, enum.Enum):
    BASELINE = "baseline"
    ADVISED_NONOPTIMAL = "advised_nonoptimal"
    ADVISED_OPTIMAL = "advised_optimal"

    def __str__(self):
        return self.value


class SimTimeout(RuntimeError):
    pass


class ScenarioMismatch(ValueError):
    pass


@dataclass(frozen=True)
class PlantState:
    t: float
    s: float
    v: float
    a: float = 0.0

    def vehicle_state(self) -> VehicleState:
        return VehicleState(s=self.s, v=self.v, t=self.t, a=self.a)


def step_plant(state: PlantState, commanded_a: float, params: VehicleParams,
               dt: float) -> tuple[PlantState, float]:
    """Advance the point-mass plant by ``dt``; returns the new state and the applied force."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    v = state.v
    F = min(max(params.force(commanded_a, v), params.F_min), params.F_max)
    a = params.accel(F, v)
    v_new = v + a * dt
    if v_new >= 0:
        s_new = state.s + v * dt + 0.5 * a * dt * dt
    else:
        # stops within the step and stays put
        s_new = state.s + (0.5 * v * v / -a if a < 0 else 0.0)
        v_new = 0.0
        a = (v_new - v) / dt
        F = params.force(a, v) if v > 0 else min(max(params.force(a, 0.0), params.F_min), 0.0)
    return PlantState(state.t + dt, s_new, v_new, a), F


def iec(power: float, dt: float, ds: float) -> float:
    """Instantaneous energy consumption, J/m."""
    return power * dt / ds


def aec_update(aec: float, n: int, sample: float) -> float:
    """Running mean after adding the (n+1)-th consumption sample."""
    return (sample + n * aec) / (n + 1)


@dataclass(frozen=True)
class EnergySample:
    P: float
    iec: float
    aec: float
    distance: float
    time: float


@dataclass
class EnergyMeter:
    regen: float = 0.0     # fraction of braking power recovered
    n: int = 0
    aec: float = 0.0
    distance: float = 0.0

    def update(self, F: float, ds: float, dt: float, t: float) -> EnergySample | None:
        if ds <= 1e-9:
            return None
        v_mean = ds / dt
        P = F * v_mean if F >= 0 else self.regen * F * v_mean
        sample = iec(P, dt, ds)
        self.aec = aec_update(self.aec, self.n, sample)
        self.n += 1
        self.distance += ds
        return EnergySample(P, sample, self.aec, self.distance, t)


class BaselineDriver:
    """Unadvised driver: cruises, brakes comfortably for a red, relaunches on green."""

    def __init__(self, scenario: Scenario, a_launch: float = 1.0, k_speed: float = 1.0,
                 b_max: float = 3.0, stop_gap: float = 0.5):
        self.scenario = scenario
        self.a_launch = a_launch
        self.k_speed = k_speed
        self.b_max = b_max
        self.stop_gap = stop_gap
        self._braking_for = None
        self.last_warning = WarningLevel.NONE

    def _hold(self, v: float) -> float:
        lim = self.scenario.limits
        return min(max(self.k_speed * (self.scenario.initial_speed - v), -lim.d_comfort), self.a_launch)

    def _stop_accel(self, v: float, d: float) -> float:
        if v <= 0:
            return 0.0
        return -v * v / (2 * d) if d > 1e-3 else -self.b_max * 2

    def _passable(self, st: PlantState, tl) -> bool:
        if phase_at(tl, st.t) != GREEN:
            return False
        dist = tl.stop_line_abscissa - st.s
        t_red = next_shifts(tl, st.t, 1)[0][0]
        v_c = max(self.scenario.initial_speed, 0.1)
        return _launch_time(st.v, dist, self.a_launch, v_c) < t_red

    def __call__(self, st: PlantState) -> float:
        ahead = lights_ahead(st.s, self.scenario.lights)
        if not ahead:
            return self._hold(st.v)
        tl = ahead[0]
        dist = tl.stop_line_abscissa - st.s
        d = dist - self.stop_gap
        if self._braking_for is tl:
            if self._passable(st, tl):
                self._braking_for = None
            else:
                return self._stop_accel(st.v, d)
        if st.v > STOP_SPEED:
            red_at_arrival = phase_at(tl, st.t + dist / st.v) == RED
        else:
            red_at_arrival = phase_at(tl, st.t) == RED
        envelope = st.v ** 2 / (2 * self.scenario.limits.d_comfort) + st.v * self.scenario.sim_step
        if red_at_arrival and d <= envelope:
            need = self._stop_accel(st.v, d)
            if -need <= self.b_max or st.v <= STOP_SPEED:
                self._braking_for = tl
                return need
        return self._hold(st.v)


class AdvisedDriver:
    """Driver that follows the advisor perfectly (optionally refined by the MPC layer)."""

    def __init__(self, scenario: Scenario, kind: DriverKind = DriverKind.ADVISED_NONOPTIMAL,
                 advisor: Advisor | None = None, planner: MpcPlanner | None = None,
                 resolve_every: int | None = None):
        self.scenario = scenario
        self.kind = DriverKind(kind)
        self.advisor = advisor or Advisor(scenario)
        self.planner = None
        if self.kind == DriverKind.ADVISED_OPTIMAL:
            self.planner = planner or MpcPlanner(scenario)
            if resolve_every is None:
                # one re-solve per OCP grid step
                resolve_every = round(self.planner.cfg.dt / scenario.sim_step)
        self.resolve_every = max(1, int(resolve_every or 1))
        self._plan: OcpSolution | None = None
        self._plan_t = 0.0
        self._step = 0
        self.last_advice: Advice | None = None
        self.mpc_solves = 0
        self.mpc_fallbacks = 0

    @property
    def last_warning(self) -> WarningLevel:
        return self.last_advice.warning if self.last_advice else WarningLevel.NONE

    def __call__(self, st: PlantState) -> float:
        vs = st.vehicle_state()
        advice = self.advisor.advise(vs)
        self.last_advice = advice
        if self.planner is None:
            return advice.a_ref
        if self._step % self.resolve_every == 0:
            self.mpc_solves += 1
            sol = self.planner.solve(vs, advice)
            if sol is None:
                self.mpc_fallbacks += 1
            self._plan, self._plan_t = sol, st.t
        self._step += 1
        if self._plan is None:
            return advice.a_ref
        # command the planned (jerk-continuous) acceleration at the step midpoint
        tau = st.t - self._plan_t + 0.5 * self.scenario.sim_step
        return self._plan.accel_at(tau)


def make_driver(scenario: Scenario, kind) -> BaselineDriver | AdvisedDriver:
    kind = DriverKind(kind)
    if kind == DriverKind.BASELINE:
        return BaselineDriver(scenario)
    return AdvisedDriver(scenario, kind)


@dataclass(frozen=True)
class Crossing:
    tl_id: str
    time: float
    color: str
    speed: float


@dataclass(frozen=True)
class Summary:
    kind: str
    stops: int
    travel_time: float
    aec_j_per_m: float
    aec_kwh_per_100km: float
    crossings: tuple[Crossing, ...]
    rms_jerk: float
    mpc_solves: int = 0
    mpc_fallbacks: int = 0

    @property
    def red_crossings(self) -> int:
        return sum(c.color == RED for c in self.crossings)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "stops": self.stops,
            "travel_time_s": self.travel_time,
            "aec_j_per_m": self.aec_j_per_m,
            "aec_kwh_per_100km": self.aec_kwh_per_100km,
            "rms_jerk_mps3": self.rms_jerk,
            "red_crossings": self.red_crossings,
            "crossings": [{"light": c.tl_id, "time_s": c.time, "color": c.color,
                           "speed_mps": c.speed} for c in self.crossings],
            "mpc_solves": self.mpc_solves,
            "mpc_fallbacks": self.mpc_fallbacks,
        }


TRACE_COLUMNS = ("t_s", "s_m", "v_mps", "a_mps2", "j_mps3", "F_n", "warning",
                 "iec_j_per_m", "aec_j_per_m", "aec_kwh_per_100km")


@dataclass
class SimTrace:
    scenario_name: str
    scenario_id: str
    kind: str
    t: np.ndarray
    s: np.ndarray
    v: np.ndarray
    a: np.ndarray
    j: np.ndarray
    F: np.ndarray
    warning: list[str]
    colors: dict[str, list[str]]     # light id -> color at every sample
    iec: np.ndarray
    aec: np.ndarray
    summary: Summary

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        ids = list(self.colors)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(TRACE_COLUMNS) + [f"color_{i}" for i in ids])
            for k in range(len(self.t)):
                row = [self.t[k], self.s[k], self.v[k], self.a[k], self.j[k], self.F[k]]
                row = [f"{x:.6g}" for x in row]
                row += [self.warning[k], f"{self.iec[k]:.6g}", f"{self.aec[k]:.6g}",
                        f"{self.aec[k] * J_PER_M_TO_KWH_PER_100KM:.6g}"]
                row += [self.colors[i][k] for i in ids]
                w.writerow(row)


def scenario_id(scenario: Scenario) -> str:
    return hashlib.sha1(repr(scenario).encode()).hexdigest()[:12]


def count_stops(t: np.ndarray, v: np.ndarray, threshold: float = STOP_SPEED,
                min_duration: float = STOP_DURATION) -> int:
    """Number of standstill episodes (speed below threshold for at least min_duration).

    A standstill that starts at the first sample is not counted.
    """
    stops, start = 0, None
    for k in range(len(t)):
        if v[k] < threshold:
            if start is None:
                start = k
        else:
            if start is not None and start > 0 and t[k] - t[start] >= min_duration:
                stops += 1
            start = None
    if start is not None and start > 0 and t[-1] - t[start] >= min_duration:
        stops += 1
    return stops


def _crossing_time(st: PlantState, a: float, x: float, dt: float) -> float:
    d = x - st.s
    if abs(a) < 1e-12:
        tau = d / st.v if st.v > 0 else dt
    else:
        disc = st.v ** 2 + 2 * a * d
        tau = (-st.v + math.sqrt(max(disc, 0.0))) / a
    return st.t + min(max(tau, 0.0), dt)


def run(scenario: Scenario, kind=DriverKind.BASELINE, driver=None, regen: float = 0.0,
        seed: int | None = None) -> SimTrace:
    """Simulate one driver over the corridor.

    ``seed`` is accepted for interface stability; the simulation has no
    random elements.
    """
    kind = DriverKind(kind)
    driver = driver or make_driver(scenario, kind)
    params = scenario.vehicle
    dt = scenario.sim_step
    length = scenario.length
    st = PlantState(0.0, 0.0, scenario.initial_speed, 0.0)
    meter = EnergyMeter(regen=regen)

    T, S, V, A, Fs, W, I, AE = [], [], [], [], [], [], [], []
    colors = {tl.tl_id: [] for tl in scenario.lights}
    crossings: list[Crossing] = []
    end_time = None
    n_steps = int(math.ceil(scenario.timeout / dt))
    for _ in range(n_steps):
        a_cmd = driver(st)
        new, F = step_plant(st, a_cmd, params, dt)
        for tl in scenario.lights:
            x = tl.stop_line_abscissa
            if st.s < x <= new.s:
                tc = _crossing_time(st, new.a, x, dt)
                crossings.append(Crossing(tl.tl_id, tc, phase_at(tl, tc), st.v + new.a * (tc - st.t)))
        sample = meter.update(F, new.s - st.s, dt, new.t)
        T.append(st.t)
        S.append(st.s)
        V.append(st.v)
        A.append(new.a)
        Fs.append(F)
        W.append(str(driver.last_warning))
        I.append(sample.iec if sample else 0.0)
        AE.append(meter.aec)
        for tl in scenario.lights:
            colors[tl.tl_id].append(phase_at(tl, st.t))
        if new.s >= length:
            end_time = _crossing_time(st, new.a, length, dt)
            st = new
            break
        st = new
    if end_time is None:
        raise SimTimeout(f"{kind} did not reach the end of the road within {scenario.timeout:g} s")

    t = np.array(T)
    a = np.array(A)
    j = np.diff(a, prepend=a[0]) / dt
    stops = count_stops(t, np.array(V))
    aec_final = meter.aec
    summary = Summary(
        kind=str(kind),
        stops=stops,
        travel_time=end_time,
        aec_j_per_m=aec_final,
        aec_kwh_per_100km=aec_final * J_PER_M_TO_KWH_PER_100KM,
        crossings=tuple(crossings),
        rms_jerk=float(np.sqrt(np.mean(j ** 2))),
        mpc_solves=getattr(driver, "mpc_solves", 0),
        mpc_fallbacks=getattr(driver, "mpc_fallbacks", 0),
    )
    return SimTrace(scenario.name, scenario_id(scenario), str(kind), t, np.array(S), np.array(V),
                    a, j, np.array(Fs), W, colors, np.array(I), np.array(AE), summary)


@dataclass(frozen=True)
class CompareReport:
    scenario_name: str
    a: Summary
    b: Summary

    @property
    def energy_reduction_pct(self) -> float:
        if self.a.aec_j_per_m == 0:
            return 0.0
        return 100.0 * (self.a.aec_j_per_m - self.b.aec_j_per_m) / self.a.aec_j_per_m

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario_name,
            "a": self.a.to_dict(),
            "b": self.b.to_dict(),
            "energy_reduction_pct": self.energy_reduction_pct,
            "travel_time_saving_s": self.a.travel_time - self.b.travel_time,
        }

    def to_text(self) -> str:
        lines = [f"scenario: {self.scenario_name}",
                 f"{'':24}{self.a.kind:>22}{self.b.kind:>22}"]
        rows = [("stops", self.a.stops, self.b.stops, "d"),
                ("travel time [s]", self.a.travel_time, self.b.travel_time, ".1f"),
                ("AEC [kWh/100km]", self.a.aec_kwh_per_100km, self.b.aec_kwh_per_100km, ".2f"),
                ("RMS jerk [m/s^3]", self.a.rms_jerk, self.b.rms_jerk, ".3f")]
        for name, x, y, fmt in rows:
            lines.append(f"{name:24}{x:>22{fmt}}{y:>22{fmt}}")
        ca = " ".join(c.color[0].upper() for c in self.a.crossings)
        cb = " ".join(c.color[0].upper() for c in self.b.crossings)
        lines.append(f"{'crossing colors':24}{ca:>22}{cb:>22}")
        lines.append(f"energy reduction: {self.energy_reduction_pct:.1f} %")
        return "\n".join(lines)


def compare(trace_a: SimTrace, trace_b: SimTrace) -> CompareReport:
    if trace_a.scenario_id != trace_b.scenario_id:
        raise ScenarioMismatch(f"traces come from different scenarios "
                               f"({trace_a.scenario_name} vs {trace_b.scenario_name})")
    return CompareReport(trace_a.scenario_name, trace_a.summary, trace_b.summary)
