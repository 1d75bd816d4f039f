"""Campaign execution: every FL round for each mode and training time."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..flsim import (
    ModelState,
    RoundOutcome,
    SatelliteState,
    global_loss,
    partition_slots,
    participation,
    run_round,
    toy_datasets,
)
from ..orbital import SunEclipseTimeline, gs_visibility_windows, merge_windows, sun_eclipse_timeline
from .scenario import Scenario

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SatelliteGeometry:
    sat_id: str
    timeline: SunEclipseTimeline
    contacts: tuple[tuple[float, float], ...]
    station_windows: dict  # station name -> list of windows


def compute_geometry(scn: Scenario) -> list[SatelliteGeometry]:
    """Sunlight/eclipse timeline and ground contacts of every satellite over the horizon."""
    t1 = scn.fl.horizon_s
    out = []
    for sat in scn.constellation:
        tl = sun_eclipse_timeline(sat.orbit, 0.0, t1, scn.ephemeris)
        per_gs = {gs.name: gs_visibility_windows(sat.orbit, gs, 0.0, t1, scn.ephemeris) for gs in scn.stations}
        contacts = merge_windows(w for ws in per_gs.values() for w in ws)
        out.append(SatelliteGeometry(sat.sat_id, tl, tuple(contacts), per_gs))
    return out


def peak_eclipse_draw(scn: Scenario, geometry: list[SatelliteGeometry]) -> float:
    """Energy (W·min) for training through the longest eclipse in the fleet."""
    longest = max((float(np.max(g.timeline.eclipse_min)) for g in geometry), default=0.0)
    return scn.power_W * longest


@dataclass
class ModeRun:
    """All rounds of one (mode, T_c, capacity) combination."""

    mode: str
    tc_min: float
    capacity_Wmin: float
    sat_ids: list[str]
    rounds: list[RoundOutcome]
    initial_loss: float

    def per_satellite_cycles(self) -> dict[str, float]:
        totals = {sid: 0.0 for sid in self.sat_ids}
        for rnd in self.rounds:
            for rec in rnd.satellites:
                totals[rec.sat_id] += rec.cycle_cost
        return totals

    @property
    def fleet_mean_cycles(self) -> float:
        vals = list(self.per_satellite_cycles().values())
        return float(np.mean(vals)) if vals else 0.0

    def count(self, status: str) -> int:
        return sum(rec.status == status for rnd in self.rounds for rec in rnd.satellites)

    @property
    def final_loss(self) -> float:
        return self.rounds[-1].loss if self.rounds else self.initial_loss


@dataclass(frozen=True)
class SweepPoint:
    capacity_Wmin: float
    mode: str
    tc_min: float
    fleet_mean_cycles: float
    feasible: bool  # capacity covers training through the longest eclipse
    dropped: int  # participations that did not deliver a model


@dataclass
class CampaignReport:
    scenario: str
    seed: int
    sat_ids: list[str]
    slots: list[tuple[float, float]]
    focus_sat: str = ""
    runs: list[ModeRun] = field(default_factory=list)
    sweep: list[SweepPoint] = field(default_factory=list)
    participation: dict = field(default_factory=dict)  # tc_min -> list (slots) of list (sats) of window | None

    def run(self, mode: str, tc_min: float) -> ModeRun:
        for r in self.runs:
            if r.mode == mode and r.tc_min == tc_min:
                return r
        raise KeyError(f"no run for mode={mode} tc={tc_min}")

    def participation_matrix(self, tc_min: float) -> np.ndarray:
        """Boolean array, slots x satellites."""
        rows = self.participation.get(tc_min, [])
        return np.array([[w is not None for w in row] for row in rows], dtype=bool).reshape(len(rows), -1)


def run_mode(
    scn: Scenario, geometry: list[SatelliteGeometry], mode: str, tc_min: float, capacity_Wmin: float | None = None
) -> ModeRun:
    """Run all N rounds from a zero model with fresh (initially charged) batteries."""
    s = scn if capacity_Wmin is None else scn.with_capacity(capacity_Wmin)
    datasets = toy_datasets(len(geometry), s.seed, s.dim, s.samples)
    states = [
        SatelliteState(g.sat_id, g.timeline, list(g.contacts), ds, s.battery.B_0, 0.0)
        for g, ds in zip(geometry, datasets)
    ]
    task = s.task(tc_min)
    model = ModelState.zeros(s.dim)
    init_loss = global_loss(model, datasets)
    rounds = []
    for n, slot in enumerate(partition_slots(0.0, s.fl.horizon_s, s.fl.num_slots), start=1):
        out = run_round(n, slot, model, states, s.fl, s.battery, task, mode, s.solver, s.energy, s.seed)
        rounds.append(out)
        model = out.model
    log.info("%s Tc=%g B=%g: fleet mean %.6f cycles", mode, tc_min, s.battery.B_max,
             ModeRun(mode, tc_min, s.battery.B_max, [g.sat_id for g in geometry], rounds, init_loss).fleet_mean_cycles)
    return ModeRun(mode, tc_min, s.battery.B_max, [g.sat_id for g in geometry], rounds, init_loss)


def _participation(scn: Scenario, geometry: list[SatelliteGeometry], tc_min: float):
    slots = partition_slots(0.0, scn.fl.horizon_s, scn.fl.num_slots)
    return [[participation(slot, g.contacts, tc_min) for g in geometry] for slot in slots]


def _empty_report(scn: Scenario, geometry) -> CampaignReport:
    return CampaignReport(
        scn.name, scn.seed, [g.sat_id for g in geometry],
        partition_slots(0.0, scn.fl.horizon_s, scn.fl.num_slots), scn.focus_sat,
    )


def run_campaign(
    scn: Scenario, modes: tuple[str, ...] | None = None, geometry: list[SatelliteGeometry] | None = None
) -> CampaignReport:
    """Every round for each requested mode and each configured training time."""
    geometry = compute_geometry(scn) if geometry is None else geometry
    report = _empty_report(scn, geometry)
    for tc in scn.tc_values:
        report.participation[tc] = _participation(scn, geometry, tc)
        for mode in modes or scn.modes:
            report.runs.append(run_mode(scn, geometry, mode, tc))
    return report


def capacity_sweep(
    scn: Scenario,
    capacities: tuple[float, ...] | list[float],
    modes: tuple[str, ...] | None = None,
    geometry: list[SatelliteGeometry] | None = None,
    base: CampaignReport | None = None,
) -> CampaignReport:
    """One campaign per battery capacity; results land in ``report.sweep``.

    Points whose capacity cannot cover training through the longest eclipse are
    still run and flagged ``feasible=False``. ``base`` supplies already computed
    runs at the scenario's own capacity.
    """
    if not capacities:
        raise ValueError("capacity_sweep: need at least one capacity")
    if any(not c > 0 for c in capacities):
        raise ValueError("capacity_sweep: capacities must be > 0")
    geometry = compute_geometry(scn) if geometry is None else geometry
    report = base if base is not None else run_campaign(scn, modes, geometry)
    peak = peak_eclipse_draw(scn, geometry)
    for cap in capacities:
        for tc in scn.tc_values:
            for mode in modes or scn.modes:
                if cap == scn.battery.B_max:
                    run = report.run(mode, tc)
                else:
                    run = run_mode(scn, geometry, mode, tc, cap)
                report.sweep.append(SweepPoint(
                    float(cap), mode, tc, run.fleet_mean_cycles, cap >= peak,
                    sum(rec.participates and not rec.contributes for rnd in run.rounds for rec in rnd.satellites),
                ))
    return report
