"""Command-line front end.

    mtla run     --scenario milan_corridor --driver baseline,advised_nonoptimal --out results/
    mtla compare --scenario milan_corridor --driver baseline,advised_nonoptimal,advised_optimal \\
                 --out results/ --emit-plot-data

Exit codes: 0 success, 1 usage, 2 scenario error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys
import time
from pathlib import Path

from .scenario import KMH, Scenario, ScenarioError, load_scenario, next_shifts, phase_at
from .sim import J_PER_M_TO_KWH_PER_100KM, DriverKind, SimTrace, compare, run

log = logging.getLogger("mtla")

EXIT_OK, EXIT_USAGE, EXIT_SCENARIO, EXIT_RUNTIME = 0, 1, 2, 3

# figure name -> (x column, y column, trace attribute for y, scale)
PLOT_FIGURES = {
    "fig_abscissa": ("t_s", "s_m", "s", 1.0),
    "fig_velocity": ("t_s", "v_kmh", "v", 1 / KMH),
    "fig_acceleration": ("t_s", "a_mps2", "a", 1.0),
    "fig_aec": ("s_m", "aec_kwh_per_100km", "aec", J_PER_M_TO_KWH_PER_100KM),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mtla", description="Traffic light advisor corridor simulations.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (("run", "simulate one or more drivers"),
                        ("compare", "simulate two or more drivers and compare them")):
        c = sub.add_parser(name, help=help_)
        c.add_argument("--scenario", default="milan_corridor",
                       help="scenario file or bundled scenario name (default: milan_corridor)")
        c.add_argument("--driver", default="baseline,advised_nonoptimal",
                       help="comma separated driver kinds: " + ", ".join(k.value for k in DriverKind))
        c.add_argument("--out", default="results", help="output directory")
        c.add_argument("--initial-speed-kmh", type=float, default=None)
        c.add_argument("--mpc-weights", default=None, metavar="WV,WA,WJ")
        c.add_argument("--emit-plot-data", action="store_true",
                       help="also write plot-ready CSVs (fig_*.csv)")
        c.add_argument("--seed", type=int, default=None,
                       help="accepted for reproducibility bookkeeping; the simulation is deterministic")
        c.add_argument("-v", "--verbose", action="count", default=0)
    return p


def _kinds(text: str) -> list[DriverKind]:
    kinds = []
    for tok in filter(None, (t.strip() for t in text.split(","))):
        try:
            kind = DriverKind(tok)
        except ValueError:
            raise UsageError(f"unknown driver kind {tok!r}") from None
        if kind not in kinds:
            kinds.append(kind)
    if not kinds:
        raise UsageError("no driver kind given")
    return kinds


def _weights(text: str) -> dict:
    try:
        w_v, w_a, w_j = (float(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"--mpc-weights expects three numbers wv,wa,wj (got {text!r})") from None
    return {"w_v": w_v, "w_a": w_a, "w_j": w_j}


def prepare_scenario(args) -> Scenario:
    scenario = load_scenario(args.scenario)
    try:
        if args.initial_speed_kmh is not None:
            scenario = scenario.with_initial_speed(args.initial_speed_kmh * KMH)
        if args.mpc_weights is not None:
            scenario = scenario.with_mpc(**_weights(args.mpc_weights))
    except ScenarioError as exc:
        raise UsageError(f"invalid override: {exc}") from None
    return scenario


def write_plot_data(traces: list[SimTrace], scenario: Scenario, out: Path) -> list[Path]:
    """Long-format CSVs, one per figure family, plus the light phase timeline."""
    paths = []
    for name, (xcol, ycol, attr, scale) in PLOT_FIGURES.items():
        path = out / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["driver", xcol, ycol])
            for tr in traces:
                xs = tr.t if xcol == "t_s" else tr.s
                for x, y in zip(xs, getattr(tr, attr)):
                    w.writerow([tr.kind, f"{x:.6g}", f"{y * scale:.6g}"])
        paths.append(path)

    t_end = max(float(tr.t[-1]) for tr in traces)
    path = out / "fig_phases.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["light", "abscissa_m", "t_start_s", "t_end_s", "color"])
        for tl in scenario.lights:
            for t0, t1, color in _phase_blocks(tl, t_end):
                w.writerow([tl.tl_id, f"{tl.stop_line_abscissa:.6g}", f"{t0:.6g}", f"{t1:.6g}", color])
    paths.append(path)
    return paths


def _phase_blocks(tl, t_end: float):
    t, color = 0.0, phase_at(tl, 0.0)
    while t < t_end:
        dt, new = next_shifts(tl, t, 1)[0]
        yield t, min(t + dt, t_end), color
        t, color = t + dt, new


def execute(args, min_kinds: int = 1) -> int:
    kinds = _kinds(args.driver)
    if len(kinds) < min_kinds:
        raise UsageError(f"{args.command} needs at least {min_kinds} driver kinds")
    scenario = prepare_scenario(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    traces = []
    for kind in kinds:
        t0 = time.perf_counter()
        tr = run(scenario, kind, seed=args.seed)
        log.info("%s: %d stops, %.1f s, %.2f kWh/100km (%.2f s wall)", kind, tr.summary.stops,
                 tr.summary.travel_time, tr.summary.aec_kwh_per_100km, time.perf_counter() - t0)
        tr.to_csv(out / f"trace_{kind}.csv")
        (out / f"summary_{kind}.json").write_text(json.dumps(tr.summary.to_dict(), indent=2))
        traces.append(tr)

    if len(traces) >= 2:
        reports = [compare(a, b) for a, b in itertools.combinations(traces, 2)]
        text = "\n\n".join(r.to_text() for r in reports)
        (out / "report.txt").write_text(text + "\n")
        (out / "report.json").write_text(json.dumps([r.to_dict() for r in reports], indent=2))
        print(text)
    else:
        s = traces[0].summary
        print(f"{s.kind}: {s.stops} stops, {s.travel_time:.1f} s, {s.aec_kwh_per_100km:.2f} kWh/100km")
    if args.emit_plot_data:
        write_plot_data(traces, scenario, out)
    return EXIT_OK


def _setup_logging(verbose: int):
    level = os.environ.get("GLOSA_LOG", "").upper() or None
    if verbose:
        level = "DEBUG" if verbose > 1 else "INFO"
    logging.basicConfig(level=level or "WARNING", format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _setup_logging(args.verbose)
        return execute(args, min_kinds=2 if args.command == "compare" else 1)
    except UsageError as exc:
        print(f"mtla: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScenarioError as exc:
        print(f"mtla: scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except (RuntimeError, OSError, ValueError) as exc:
        print(f"mtla: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
