"""Multiple traffic light advisor: green-wave speed advice and corridor simulation."""
from .scenario import (
    GREEN,
    RED,
    KMH,
    PathGeometry,
    PhaseSchedule,
    RoadLimits,
    Scenario,
    ScenarioError,
    VehicleParams,
    load_scenario,
    next_shifts,
    phase_at,
)
from .kinematics import (
    Infeasible,
    MotionSolution,
    VelocityInterval,
    intersect,
    uam_csm_fixed_target,
    uam_csm_fixed_total_time,
    uam_fixed_target,
    uam_fixed_time,
    velocity_range,
)
from .advisor import Advice, Advisor, VehicleState, WarningLevel, activation_check, advise, escalate, localize
from .mpc import MpcPlanner, OcpConfig, PositionBounds, optimal_advise, position_bounds, solve_ocp
from .sim import DriverKind, SimTrace, compare, run, step_plant

__version__ = "0.1.0"
