"""Command line entry point.

Exit codes: 0 success, 2 invalid scenario or instance file, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from ..energy import BatterySpec, EnergyProfile, TrainingTask
from ..errors import DomainError, SatSchedError, ScenarioError
from ..orbital import SunEclipseTimeline
from ..scheduler import build_problem, ccp_solve, grid_oracle
from .campaign import capacity_sweep, compute_geometry, peak_eclipse_draw, run_campaign
from .export import export
from .scenario import RUN_MODES, bundled_scenario, load_scenario, tomllib

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3
INSTANCE_FORMAT = "satsched-instance/1"

log = logging.getLogger("satsched")


def _resolve(arg: str) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    try:
        return bundled_scenario(arg)
    except ScenarioError:
        raise ScenarioError(f"{arg}: no such file or bundled scenario") from None


def _capacities(text: str | None, default: tuple[float, ...]) -> tuple[float, ...]:
    if text is None or text == "":
        if not default:
            raise ScenarioError("--sweep given without capacities and the scenario lists none")
        return default
    try:
        caps = tuple(float(c) for c in text.split(",") if c.strip())
    except ValueError:
        raise ScenarioError(f"--sweep: expected comma-separated numbers, got {text!r}") from None
    if not caps or any(c <= 0 for c in caps):
        raise ScenarioError("--sweep: capacities must be > 0")
    return caps


def cmd_run(args) -> int:
    scn = load_scenario(_resolve(args.scenario))
    if args.seed is not None:
        if args.seed < 0:
            raise ScenarioError("--seed must be >= 0")
        scn = replace(scn, seed=args.seed)
    if args.mode:
        scn = replace(scn, mode=args.mode)
    geometry = compute_geometry(scn)
    report = run_campaign(scn, geometry=geometry)
    if args.sweep is not None:
        caps = _capacities(args.sweep, scn.sweep_capacities)
        report = capacity_sweep(scn, caps, geometry=geometry, base=report)
    files = export(report, args.out, scn.battery.aging_constant, geometry)
    for run in report.runs:
        print(f"{run.mode:9s} Tc={run.tc_min:g} min  fleet mean consumed cycles {run.fleet_mean_cycles:.6f}"
              f"  final loss {run.final_loss:.6f}")
    if report.sweep:
        print(f"peak per-eclipse draw {peak_eclipse_draw(scn, geometry):.1f} W·min")
        for p in report.sweep:
            flag = "" if p.feasible else "  (below peak eclipse draw)"
            print(f"  B={p.capacity_Wmin:g} {p.mode:9s} Tc={p.tc_min:g}: {p.fleet_mean_cycles:.6f}{flag}")
    print(f"wrote {len(files)} files to {args.out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    scn = load_scenario(_resolve(args.scenario))
    print(f"{scn.name}: OK")
    print(f"  satellites {len(scn.constellation)}, stations {', '.join(g.name for g in scn.stations)}")
    print(f"  battery {scn.battery.B_max:g} W·min, a={scn.battery.aging_constant:g}, P_c={scn.power_W:g} W,"
          f" T_c={', '.join(f'{t:g}' for t in scn.tc_values)} min")
    print(f"  horizon {scn.fl.horizon_s / 3600:g} h in {scn.fl.num_slots} slots, mode {scn.mode}, seed {scn.seed}")
    return EXIT_OK


def load_instance(path):
    """Small scheduling instance for the grid oracle (TOML, see README)."""
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read instance: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: parse error: {exc}") from exc
    if doc.get("format") != INSTANCE_FORMAT:
        raise ScenarioError(f"{path}: format must be {INSTANCE_FORMAT!r}")
    try:
        tl = SunEclipseTimeline.from_durations(doc["sunlight_min"], doc["eclipse_min"])
        cap = float(doc["capacity_Wmin"])
        bat = BatterySpec(cap, float(doc.get("initial_charge_Wmin", cap)), float(doc.get("aging_constant", 0.8)))
        task = TrainingTask(float(doc["power_W"]), float(doc["tc_min"]))
        if "harvest_Wmin" in doc:
            zeros = [0.0] * tl.J
            prof = EnergyProfile(tuple(doc.get("demand_sunlight_Wmin", zeros)),
                                 tuple(doc.get("demand_eclipse_Wmin", zeros)), tuple(doc["harvest_Wmin"]))
        else:
            prof = EnergyProfile.full_recharge(tl, bat, task)
        return build_problem(tl, prof, task, bat), float(doc.get("step_min", 0.1))
    except KeyError as exc:
        raise ScenarioError(f"{path}: missing key {exc.args[0]!r}") from exc
    except (DomainError, TypeError, ValueError) as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def cmd_oracle(args) -> int:
    inst, step = load_instance(args.instance)
    res = grid_oracle(inst, step)
    sched, traj, diag = ccp_solve(inst)
    out = {
        "oracle_cost": res.cost,
        "oracle_tau_s": res.schedule.tau_s.tolist(),
        "oracle_tau_e": res.schedule.tau_e.tolist(),
        "ccp_cost": diag.accounting_cost,
        "ccp_tau_s": sched.tau_s.tolist(),
        "ccp_tau_e": sched.tau_e.tolist(),
        "ccp_iterations": diag.iterations,
        "grid_step_min": step,
        "states_visited": res.states_visited,
    }
    print(json.dumps(out, indent=1))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="satsched", description="Battery-aware federated learning scheduling")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a campaign and write report files")
    r.add_argument("--scenario", required=True, help="scenario file or bundled scenario name")
    r.add_argument("--mode", choices=RUN_MODES, help="override the scenario's mode")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--seed", type=int, help="override the scenario's seed")
    r.add_argument("--sweep", nargs="?", const="", metavar="C1,C2,...",
                   help="battery capacity sweep in W·min (default: the scenario's list)")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("--scenario", required=True)
    v.set_defaults(func=cmd_validate)

    o = sub.add_parser("oracle", help="grid-search a tiny scheduling instance and compare with the solver")
    o.add_argument("--instance", required=True)
    o.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SatSchedError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
