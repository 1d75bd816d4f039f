"""CSV/JSON outputs of a campaign.

Floats carry six decimals, times are seconds from the scenario epoch and every
file is written in a fixed order so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from ..energy import TRAJECTORY_HEADER, trajectory_rows
from ..orbital import timeline_rows, write_intervals_csv
from .campaign import CampaignReport, ModeRun, SatelliteGeometry

ROUNDS_HEADER = ["slot", "sat_id", "participates", "receive_s", "deadline_s", "tc_min", "mode",
                 "cycle_cost", "max_dod", "loss_after"]
SCHEDULE_HEADER = ["sat_id", "slot", "j", "kind", "tau_min", "window_start_s", "window_len_min"]
DOD_HEADER = ["slot", "sat_id", "mode", "tc_min", "max_dod", "cycle_cost"]
CYCLE_HEADER = ["sat_id", "mode", "tc_min", "consumed_cycles"]
FLEET_HEADER = ["mode", "tc_min", "capacity_Wmin", "fleet_mean_cycles", "delivered", "dropped"]
PARTICIPATION_HEADER = ["slot", "sat_id", "tc_min", "participates", "receive_s", "deadline_s"]
LOSS_HEADER = ["slot", "mode", "tc_min", "loss", "contributors"]
SWEEP_HEADER = ["capacity_Wmin", "mode", "tc_min", "fleet_mean_cycles", "feasible", "dropped"]


def fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "" if math.isnan(v) else f"{v:.6f}"
    return str(v)


def _write(path: Path, header: list[str], rows) -> Path:
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(v) for v in row])
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc
    return path


def _tag(run: ModeRun) -> str:
    return f"{run.mode}_tc{run.tc_min:g}"


def _rounds_rows(report: CampaignReport):
    for run in report.runs:
        for rnd in run.rounds:
            for rec in rnd.satellites:
                yield [rnd.slot, rec.sat_id, rec.participates, rec.receive_s, rec.deadline_s, float(run.tc_min),
                       run.mode, float(rec.cycle_cost), float(rec.max_dod), float(rnd.loss)]


def _schedule_rows(run: ModeRun):
    for rnd in run.rounds:
        for rec in rnd.satellites:
            if rec.schedule is None or rec.window is None:
                continue
            for j, p in enumerate(rec.window.periods):
                yield [rec.sat_id, rnd.slot, j + 1, "s", float(rec.schedule.tau_s[j]),
                       float(p.sunlight_start), p.sunlight_s / 60.0]
                yield [rec.sat_id, rnd.slot, j + 1, "e", float(rec.schedule.tau_e[j]),
                       float(p.eclipse_start), p.eclipse_s / 60.0]


def _trajectory_rows(run: ModeRun, a: float):
    for rnd in run.rounds:
        for rec in rnd.satellites:
            if rec.trajectory is not None:
                yield from trajectory_rows(rec.sat_id, rnd.slot, rec.trajectory, a)


def _diagnostics(report: CampaignReport) -> dict:
    runs = []
    for run in report.runs:
        events = []
        for rnd in run.rounds:
            for rec in rnd.satellites:
                if rec.participates:
                    events.append({"slot": rnd.slot, "sat_id": rec.sat_id, "status": rec.status, **rec.diagnostics})
        runs.append({
            "mode": run.mode,
            "tc_min": run.tc_min,
            "capacity_Wmin": run.capacity_Wmin,
            "fleet_mean_cycles": run.fleet_mean_cycles,
            "initial_loss": run.initial_loss,
            "final_loss": run.final_loss,
            "round_flags": {str(rnd.slot): rnd.flags for rnd in run.rounds if rnd.flags},
            "satellite_rounds": events,
        })
    return {"scenario": report.scenario, "seed": report.seed, "runs": runs}


def _wide(path: Path, key: str, columns: list[str], table: dict) -> Path:
    keys = sorted({k for col in table.values() for k in col})
    return _write(path, [key] + columns, ([k] + [table[c].get(k, float("nan")) for c in columns] for k in keys))


def export(
    report: CampaignReport,
    out_dir,
    aging_constant: float = 0.8,
    geometry: list[SatelliteGeometry] | None = None,
) -> list[Path]:
    """Write all report files into ``out_dir`` (created if needed); returns the paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot create output directory {out}: {exc.strerror}") from exc
    files = []
    files.append(_write(out / "rounds.csv", ROUNDS_HEADER, _rounds_rows(report)))
    files.append(_write(out / "dod_per_slot.csv", DOD_HEADER, (
        [rnd.slot, rec.sat_id, run.mode, float(run.tc_min), float(rec.max_dod), float(rec.cycle_cost)]
        for run in report.runs for rnd in run.rounds for rec in rnd.satellites
    )))
    files.append(_write(out / "cycle_life.csv", CYCLE_HEADER, (
        [sid, run.mode, float(run.tc_min), float(c)]
        for run in report.runs for sid, c in run.per_satellite_cycles().items()
    )))
    files.append(_write(out / "fleet.csv", FLEET_HEADER, (
        [run.mode, float(run.tc_min), float(run.capacity_Wmin), run.fleet_mean_cycles, run.count("ok"),
         sum(rec.participates and not rec.contributes for rnd in run.rounds for rec in rnd.satellites)]
        for run in report.runs
    )))
    files.append(_write(out / "participation.csv", PARTICIPATION_HEADER, (
        [n, sid, float(tc), win is not None,
         float("nan") if win is None else win[0], float("nan") if win is None else win[1]]
        for tc, rows in sorted(report.participation.items())
        for n, row in enumerate(rows, start=1) for sid, win in zip(report.sat_ids, row)
    )))
    files.append(_write(out / "loss.csv", LOSS_HEADER, (
        row for run in report.runs for row in (
            [[0, run.mode, float(run.tc_min), run.initial_loss, 0]]
            + [[rnd.slot, run.mode, float(run.tc_min), float(rnd.loss), sum(rnd.alphas)] for rnd in run.rounds]
        )
    )))
    files.append(_write(out / "sweep.csv", SWEEP_HEADER, (
        [p.capacity_Wmin, p.mode, float(p.tc_min), p.fleet_mean_cycles, p.feasible, p.dropped] for p in report.sweep
    )))

    # plot-ready tables: one column per (mode, T_c)
    dod_cols = {}
    for run in report.runs:
        col = dod_cols.setdefault(_tag(run), {})
        for rnd in run.rounds:
            for rec in rnd.satellites:
                if rec.sat_id == report.focus_sat:
                    col[rnd.slot] = float(rec.max_dod)
    files.append(_wide(out / "plot_dod_per_slot.csv", "slot", list(dod_cols), dod_cols))
    life_cols = {}
    for p in report.sweep:
        life_cols.setdefault(f"{p.mode}_tc{p.tc_min:g}", {})[p.capacity_Wmin] = p.fleet_mean_cycles
    files.append(_wide(out / "plot_cycle_life_vs_capacity.csv", "capacity_Wmin", list(life_cols), life_cols))

    for run in report.runs:
        files.append(_write(out / f"schedules_{_tag(run)}.csv", SCHEDULE_HEADER, _schedule_rows(run)))
        files.append(_write(out / f"trajectories_{_tag(run)}.csv", TRAJECTORY_HEADER,
                            _trajectory_rows(run, aging_constant)))

    if geometry is not None:
        rows = []
        for g in geometry:
            rows.extend(timeline_rows(g.sat_id, g.timeline))
            rows.extend((g.sat_id, "visible", a, b) for a, b in g.contacts)
        files.append(write_intervals_csv(out / "intervals.csv", rows))

    diag = out / "diagnostics.json"
    diag.write_text(json.dumps(_diagnostics(report), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    files.append(diag)
    return files
