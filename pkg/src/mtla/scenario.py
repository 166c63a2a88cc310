"""Corridor world model: path geometry, signal timing, vehicle and road limits.

Scenarios are stored as TOML files.  A bundled scenario can be loaded by name
(``load_scenario("milan_corridor")``) or any file by path.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

KMH = 1.0 / 3.6

GREEN = "green"
RED = "red"


class ScenarioError(Exception):
    """Raised when a scenario file is missing, malformed or invalid."""


class ScenarioParseError(ScenarioError):
    pass


class ScenarioValidationError(ScenarioError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _require(cond: bool, field_name: str, message: str) -> None:
    if not cond:
        raise ScenarioValidationError(field_name, message)


@dataclass(frozen=True)
class PathGeometry:
    waypoints: tuple[tuple[float, float], ...]

    def __post_init__(self):
        _require(len(self.waypoints) >= 2, "road.waypoints", "need at least 2 waypoints")
        for k, (p, q) in enumerate(zip(self.waypoints, self.waypoints[1:])):
            _require(math.dist(p, q) > 0.0, "road.waypoints",
                     f"waypoints {k} and {k + 1} coincide")

    @property
    def segment_lengths(self) -> tuple[float, ...]:
        return tuple(math.dist(p, q) for p, q in zip(self.waypoints, self.waypoints[1:]))

    @property
    def abscissae(self) -> tuple[float, ...]:
        """Arclength of every waypoint."""
        out = [0.0]
        for seg in self.segment_lengths:
            out.append(out[-1] + seg)
        return tuple(out)

    @property
    def total_length(self) -> float:
        return math.fsum(self.segment_lengths)

    @classmethod
    def straight(cls, length: float) -> "PathGeometry":
        return cls(((0.0, 0.0), (float(length), 0.0)))


@dataclass(frozen=True)
class PhaseSchedule:
    """Periodic binary green/red timing of one traffic light.

    The green window starts at ``offset`` (mod ``cycle``) and lasts
    ``green_duration``; the rest of the cycle is red (yellow included).
    At a shift instant the new color applies.
    """

    tl_id: str
    stop_line_abscissa: float
    cycle: float
    green_duration: float
    offset: float = 0.0

    def __post_init__(self):
        _require(self.cycle > 0, f"light[{self.tl_id}].cycle_s", "must be > 0")
        _require(0 < self.green_duration < self.cycle, f"light[{self.tl_id}].green_s",
                 "must satisfy 0 < green_s < cycle_s")
        _require(0 <= self.offset < self.cycle, f"light[{self.tl_id}].offset_s",
                 "must satisfy 0 <= offset_s < cycle_s")

    @property
    def initial_color(self) -> str:
        return phase_at(self, 0.0)

    def _cycle_time(self, t: float) -> float:
        return (t - self.offset) % self.cycle


def phase_at(sched: PhaseSchedule, t: float) -> str:
    tau = sched._cycle_time(t)
    # guard float residue right below a cycle boundary
    if sched.cycle - tau < 1e-9:
        tau = 0.0
    return GREEN if tau < sched.green_duration else RED


def next_shifts(sched: PhaseSchedule, t: float, count: int = 3) -> list[tuple[float, str]]:
    """Upcoming phase changes as ``(seconds from t, new color)`` pairs."""
    if count < 1:
        raise ValueError("count must be >= 1")
    tau = sched._cycle_time(t)
    if sched.cycle - tau < 1e-9:
        tau = 0.0
    if tau < sched.green_duration:
        first, color = sched.green_duration - tau, RED
    else:
        first, color = sched.cycle - tau, GREEN
    out = [(first, color)]
    red = sched.cycle - sched.green_duration
    while len(out) < count:
        dt, c = out[-1]
        if c == RED:
            out.append((dt + red, GREEN))
        else:
            out.append((dt + sched.green_duration, RED))
    return out


@dataclass(frozen=True)
class VehicleParams:
    m: float = 1500.0
    A_f: float = 2.2
    rho: float = 1.225
    C_d: float = 0.30
    C_r: float = 0.012
    g: float = 9.81
    F_min: float = -6000.0
    F_max: float = 4000.0
    a_max: float = 2.5
    j_min: float = -3.0
    j_max: float = 3.0

    def __post_init__(self):
        _require(self.F_min < 0 < self.F_max, "vehicle.force_*", "need F_min < 0 < F_max")
        _require(self.j_min < 0 < self.j_max, "vehicle.jerk_*", "need j_min < 0 < j_max")
        _require(self.a_max > 0, "vehicle.accel_max_mps2", "must be > 0")
        for name in ("m", "A_f", "rho", "C_d", "C_r", "g"):
            _require(getattr(self, name) > 0, f"vehicle.{name}", "must be > 0")

    @property
    def drag_coeff(self) -> float:
        """Lumped aerodynamic coefficient c in F_drag = c*v**2."""
        return 0.5 * self.A_f * self.rho * self.C_d

    @property
    def rolling_force(self) -> float:
        return self.m * self.g * self.C_r

    def force(self, a, v):
        """Longitudinal force required for acceleration ``a`` at speed ``v``."""
        return self.m * a + self.drag_coeff * v * v + self.rolling_force

    def accel(self, F, v):
        return (F - self.drag_coeff * v * v - self.rolling_force) / self.m


@dataclass(frozen=True)
class RoadLimits:
    v_min_road: float = 20.0 * KMH
    v_max_road: float = 50.0 * KMH
    horizon_single: float = 100.0
    horizon_multi: float = 500.0
    d_comfort: float = 1.0

    def __post_init__(self):
        _require(0 < self.v_min_road < self.v_max_road, "limits.v_*_road_kmh",
                 "need 0 < v_min_road < v_max_road")
        _require(0 < self.horizon_single <= self.horizon_multi, "limits.horizon_*_m",
                 "need 0 < horizon_single <= horizon_multi")
        _require(self.d_comfort > 0, "limits.d_comfort_mps2", "must be > 0")


@dataclass(frozen=True)
class MpcSettings:
    t_f: float = 6.0
    n_steps: int = 30
    w_v: float = 1.0
    w_a: float = 1.0
    w_j: float = 10.0
    tol: float = 1e-6
    max_iter: int = 60

    def __post_init__(self):
        _require(self.t_f > 0, "mpc.horizon_s", "must be > 0")
        _require(self.n_steps >= 10, "mpc.n_steps", "must be >= 10")
        _require(min(self.w_v, self.w_a) >= 0 and self.w_j > 0, "mpc.w_*",
                 "weights must be >= 0 with w_j > 0")


@dataclass(frozen=True)
class Scenario:
    name: str
    path: PathGeometry
    lights: tuple[PhaseSchedule, ...]
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    limits: RoadLimits = field(default_factory=RoadLimits)
    initial_speed: float = 40.0 * KMH
    sim_step: float = 0.05
    timeout: float = 600.0
    friction: tuple[tuple[float, float], ...] = ()
    mpc: MpcSettings = field(default_factory=MpcSettings)

    def __post_init__(self):
        length = self.path.total_length
        xs = [tl.stop_line_abscissa for tl in self.lights]
        _require(all(a < b for a, b in zip(xs, xs[1:])), "light.abscissa_m",
                 "lights must be listed in strictly ascending abscissa")
        for tl in self.lights:
            _require(0 < tl.stop_line_abscissa < length, f"light[{tl.tl_id}].abscissa_m",
                     f"must lie inside the road (0, {length:g})")
        _require(0 <= self.initial_speed <= self.limits.v_max_road + 1e-9,
                 "sim.initial_speed_kmh", "must be within [0, v_max_road]")
        _require(self.sim_step > 0, "sim.step_s", "must be > 0")
        _require(self.timeout > 0, "sim.timeout_s", "must be > 0")

    @property
    def length(self) -> float:
        return self.path.total_length

    def with_initial_speed(self, v: float) -> "Scenario":
        return replace(self, initial_speed=v)

    def with_mpc(self, **kw) -> "Scenario":
        return replace(self, mpc=replace(self.mpc, **kw))


def bundled_scenarios() -> list[str]:
    root = resources.files("mtla") / "data"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def _resolve(path_or_name) -> Path:
    p = Path(path_or_name)
    if p.exists():
        return p
    if p.suffix == "" and str(path_or_name) in bundled_scenarios():
        return Path(str(resources.files("mtla") / "data" / f"{path_or_name}.toml"))
    raise ScenarioError(f"scenario file not found: {path_or_name}")


def _num(table: dict, key: str, section: str, default=None) -> float:
    if key not in table:
        if default is None:
            raise ScenarioValidationError(f"{section}.{key}", "missing")
        return default
    val = table[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ScenarioValidationError(f"{section}.{key}", f"expected a number, got {val!r}")
    return float(val)


def parse_scenario(doc: dict, name: str = "scenario") -> Scenario:
    """Build a validated Scenario from an already parsed TOML document."""
    road = doc.get("road")
    if not isinstance(road, dict):
        raise ScenarioValidationError("road", "missing [road] section")
    if "waypoints" in road:
        try:
            pts = tuple((float(x), float(y)) for x, y in road["waypoints"])
        except (TypeError, ValueError):
            raise ScenarioValidationError("road.waypoints", "expected a list of [x, y] pairs")
        path = PathGeometry(pts)
        if "length_m" in road:
            _require(abs(path.total_length - _num(road, "length_m", "road")) < 1e-6,
                     "road.length_m", "does not match the waypoint polyline length")
    else:
        length = _num(road, "length_m", "road")
        _require(length > 0, "road.length_m", "must be > 0")
        path = PathGeometry.straight(length)

    lim = doc.get("limits", {})
    d = RoadLimits()
    limits = RoadLimits(
        v_min_road=_num(lim, "v_min_road_kmh", "limits", d.v_min_road / KMH) * KMH,
        v_max_road=_num(lim, "v_max_road_kmh", "limits", d.v_max_road / KMH) * KMH,
        horizon_single=_num(lim, "horizon_single_m", "limits", d.horizon_single),
        horizon_multi=_num(lim, "horizon_multi_m", "limits", d.horizon_multi),
        d_comfort=_num(lim, "d_comfort_mps2", "limits", d.d_comfort),
    )

    veh = doc.get("vehicle", {})
    dv = VehicleParams()
    keys = [("m", "mass_kg"), ("A_f", "frontal_area_m2"), ("rho", "air_density_kgpm3"),
            ("C_d", "drag_coeff"), ("C_r", "rolling_coeff"), ("g", "gravity_mps2"),
            ("F_min", "force_min_n"), ("F_max", "force_max_n"), ("a_max", "accel_max_mps2"),
            ("j_min", "jerk_min_mps3"), ("j_max", "jerk_max_mps3")]
    vehicle = VehicleParams(**{attr: _num(veh, key, "vehicle", getattr(dv, attr))
                               for attr, key in keys})

    lights = []
    raw_lights = doc.get("light", [])
    if not isinstance(raw_lights, list):
        raise ScenarioValidationError("light", "use [[light]] array-of-tables blocks")
    for k, tl in enumerate(raw_lights):
        tl_id = str(tl.get("id", f"TL{k + 1}"))
        sec = f"light[{tl_id}]"
        lights.append(PhaseSchedule(
            tl_id=tl_id,
            stop_line_abscissa=_num(tl, "abscissa_m", sec),
            cycle=_num(tl, "cycle_s", sec),
            green_duration=_num(tl, "green_s", sec),
            offset=_num(tl, "offset_s", sec, 0.0),
        ))

    sim = doc.get("sim", {})
    mp = doc.get("mpc", {})
    dm = MpcSettings()
    mpc = MpcSettings(
        t_f=_num(mp, "horizon_s", "mpc", dm.t_f),
        n_steps=int(_num(mp, "n_steps", "mpc", dm.n_steps)),
        w_v=_num(mp, "w_v", "mpc", dm.w_v),
        w_a=_num(mp, "w_a", "mpc", dm.w_a),
        w_j=_num(mp, "w_j", "mpc", dm.w_j),
        tol=_num(mp, "tol", "mpc", dm.tol),
        max_iter=int(_num(mp, "max_iter", "mpc", dm.max_iter)),
    )

    friction = ()
    fr = doc.get("friction")
    if fr:
        xs, mus = fr.get("abscissa_m", []), fr.get("mu", [])
        _require(len(xs) == len(mus), "friction", "abscissa_m and mu lengths differ")
        friction = tuple((float(x), float(mu)) for x, mu in zip(xs, mus))

    return Scenario(
        name=str(doc.get("name", name)),
        path=path,
        lights=tuple(lights),
        vehicle=vehicle,
        limits=limits,
        initial_speed=_num(sim, "initial_speed_kmh", "sim", 40.0) * KMH,
        sim_step=_num(sim, "step_s", "sim", 0.05),
        timeout=_num(sim, "timeout_s", "sim", 600.0),
        friction=friction,
        mpc=mpc,
    )


def load_scenario(path_or_name) -> Scenario:
    path = _resolve(path_or_name)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioParseError(f"{path}: {exc}") from exc
    return parse_scenario(doc, name=path.stem)
