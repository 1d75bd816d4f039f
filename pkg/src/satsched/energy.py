"""Battery recursion, depth of discharge and Li-ion cycle-life cost.

Units inside this module: energy in W·min, power in W, time in minutes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import BatteryDepletedError, DomainError, InconsistentLengthsError, SunlightDeficitError
from .orbital import SunEclipseTimeline

LN10 = math.log(10.0)

# Relative slack (times B_max) tolerated before a bound violation counts as an error.
CHARGE_TOL = 1e-9


@dataclass(frozen=True)
class BatterySpec:
    capacity_Wmin: float
    initial_charge_Wmin: float | None = None
    aging_constant: float = 0.8

    def __post_init__(self):
        if not self.capacity_Wmin > 0:
            raise DomainError(f"BatterySpec: capacity must be > 0, got {self.capacity_Wmin}")
        if self.initial_charge_Wmin is None:
            object.__setattr__(self, "initial_charge_Wmin", float(self.capacity_Wmin))
        if not 0 <= self.initial_charge_Wmin <= self.capacity_Wmin:
            raise DomainError(
                f"BatterySpec: initial charge {self.initial_charge_Wmin} outside [0, {self.capacity_Wmin}]"
            )
        if not self.aging_constant > 0:
            raise DomainError(f"BatterySpec: aging constant must be > 0, got {self.aging_constant}")

    @property
    def B_max(self) -> float:
        return self.capacity_Wmin

    @property
    def B_0(self) -> float:
        return self.initial_charge_Wmin

    def with_initial_charge(self, charge: float) -> "BatterySpec":
        charge = min(max(charge, 0.0), self.capacity_Wmin)
        return BatterySpec(self.capacity_Wmin, charge, self.aging_constant)


@dataclass(frozen=True)
class TrainingTask:
    power_W: float
    duration_min: float

    def __post_init__(self):
        if not self.power_W > 0:
            raise DomainError(f"TrainingTask: power must be > 0, got {self.power_W}")
        if not self.duration_min >= 0:
            raise DomainError(f"TrainingTask: duration must be >= 0, got {self.duration_min}")


@dataclass(frozen=True)
class EnergyProfile:
    """Per-period non-training demand and harvested energy (W·min)."""

    demand_sunlight: tuple[float, ...]
    demand_eclipse: tuple[float, ...]
    harvest_sunlight: tuple[float, ...]

    def __post_init__(self):
        n = len(self.demand_sunlight)
        if len(self.demand_eclipse) != n or len(self.harvest_sunlight) != n:
            raise InconsistentLengthsError("EnergyProfile: per-period lists differ in length")
        for name in ("demand_sunlight", "demand_eclipse", "harvest_sunlight"):
            vals = tuple(float(v) for v in getattr(self, name))
            if any(not (v >= 0 and math.isfinite(v)) for v in vals):
                raise DomainError(f"EnergyProfile: {name} must be finite and >= 0")
            object.__setattr__(self, name, vals)

    @property
    def J(self) -> int:
        return len(self.demand_sunlight)

    @classmethod
    def from_powers(
        cls,
        timeline: SunEclipseTimeline,
        demand_sunlight_W: float = 0.0,
        demand_eclipse_W: float = 0.0,
        harvest_W: float = 0.0,
    ) -> "EnergyProfile":
        """Constant power rates integrated over each interval; truncated periods are pro-rated."""
        s, e = timeline.sunlight_min, timeline.eclipse_min
        return cls(tuple(demand_sunlight_W * s), tuple(demand_eclipse_W * e), tuple(harvest_W * s))

    @classmethod
    def full_recharge(
        cls, timeline: SunEclipseTimeline, battery: BatterySpec, task: TrainingTask
    ) -> "EnergyProfile":
        """No non-training demand; every non-empty sunlight interval can power training
        for its whole length and still refill the battery completely."""
        s = timeline.sunlight_min
        harvest = np.where(s > 0, battery.B_max + task.power_W * s, 0.0)
        zeros = (0.0,) * timeline.J
        return cls(zeros, zeros, tuple(harvest))


@dataclass(frozen=True)
class Schedule:
    """Training minutes per period, in sunlight and in eclipse."""

    tau_s: np.ndarray
    tau_e: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.tau_s, dtype=float).reshape(-1)
        te = np.asarray(self.tau_e, dtype=float).reshape(-1)
        if ts.shape != te.shape:
            raise InconsistentLengthsError("Schedule: tau_s and tau_e differ in length")
        object.__setattr__(self, "tau_s", ts)
        object.__setattr__(self, "tau_e", te)

    @property
    def J(self) -> int:
        return len(self.tau_s)

    @property
    def total(self) -> float:
        return float(np.sum(self.tau_s) + np.sum(self.tau_e))

    @classmethod
    def zeros(cls, J: int) -> "Schedule":
        return cls(np.zeros(J), np.zeros(J))


@dataclass(frozen=True)
class BatteryTrajectory:
    b_s: np.ndarray  # charge at sunlight start, per period
    b_e: np.ndarray  # charge at eclipse start
    b_s_next: np.ndarray  # charge at the end of the eclipse
    d_e: np.ndarray  # DoD at eclipse start
    d_hat_e: np.ndarray  # DoD at eclipse end
    capacity_Wmin: float

    @property
    def J(self) -> int:
        return len(self.b_e)

    @property
    def final_charge(self) -> float:
        return float(self.b_s_next[-1])

    @property
    def max_dod(self) -> float:
        return float(max(np.max(self.d_e), np.max(self.d_hat_e)))


def dod(charge_Wmin: float, spec: BatterySpec) -> float:
    """Depth of discharge ``(B_max - b) / B_max``."""
    B = spec.B_max
    if not -CHARGE_TOL * B <= charge_Wmin <= B * (1 + CHARGE_TOL):
        raise DomainError(f"dod: charge {charge_Wmin} outside [0, {B}]")
    return min(max((B - charge_Wmin) / B, 0.0), 1.0)


def cycle_life_term(d, a: float):
    """``10**(a*(d-1)) * d``; the per-endpoint term of the cycle-life integral."""
    d = np.asarray(d, dtype=float)
    return np.power(10.0, a * (d - 1.0)) * d


def cycle_life_cost(d1: float, d2: float, a: float) -> float:
    """Cycle life consumed when DoD deepens from ``d1`` to ``d2``; zero otherwise."""
    if not (0.0 <= d1 <= 1.0 and 0.0 <= d2 <= 1.0):
        raise DomainError(f"cycle_life_cost: DoD values must lie in [0, 1], got {d1}, {d2}")
    if not a > 0:
        raise DomainError(f"cycle_life_cost: a must be > 0, got {a}")
    if d2 <= d1:
        return 0.0
    # phi(d2) - phi(d1) factored so that close endpoints do not cancel
    delta = d2 - d1
    return float(10.0 ** (a * (d1 - 1.0)) * (d2 * math.expm1(a * LN10 * delta) + delta))


def per_period_costs(traj: BatteryTrajectory, a: float) -> np.ndarray:
    return np.array([cycle_life_cost(d1, d2, a) for d1, d2 in zip(traj.d_e, traj.d_hat_e)])


def horizon_cycle_cost(traj: BatteryTrajectory, a: float) -> float:
    """Total cycle life consumed over the horizon; only eclipse deepening counts."""
    return float(np.sum(per_period_costs(traj, a)))


def simulate_battery(
    timeline: SunEclipseTimeline,
    profile: EnergyProfile,
    task: TrainingTask,
    sched: Schedule,
    spec: BatterySpec,
) -> BatteryTrajectory:
    """Forward battery recursion for a given training schedule.

    Raises :class:`SunlightDeficitError` when training in sunlight would draw on the
    battery and :class:`BatteryDepletedError` when an eclipse ends below zero.
    """
    J = timeline.J
    tau_s, tau_e = sched.tau_s, sched.tau_e
    if profile.J != J or tau_s.shape != (J,) or tau_e.shape != (J,):
        raise InconsistentLengthsError(
            f"simulate_battery: J={J}, profile={profile.J}, schedule={tau_s.shape}/{tau_e.shape}"
        )
    B = spec.B_max
    tol = CHARGE_TOL * B
    P = task.power_W
    b_s = np.empty(J)
    b_e = np.empty(J)
    b_n = np.empty(J)
    b = spec.B_0
    for j in range(J):
        b_s[j] = b
        surplus = profile.harvest_sunlight[j] - profile.demand_sunlight[j] - P * tau_s[j]
        if surplus < -tol:
            raise SunlightDeficitError(j, surplus)
        b_e[j] = min(b + max(surplus, 0.0), B)
        b = b_e[j] - profile.demand_eclipse[j] - P * tau_e[j]
        if b < -tol:
            raise BatteryDepletedError(j, b)
        b = max(b, 0.0)
        b_n[j] = b
    d_e = np.clip((B - b_e) / B, 0.0, 1.0)
    d_hat = np.clip((B - b_n) / B, 0.0, 1.0)
    return BatteryTrajectory(b_s, b_e, b_n, d_e, d_hat, B)


TRAJECTORY_HEADER = ["sat_id", "slot", "j", "b_s_Wmin", "b_e_Wmin", "b_s_next_Wmin", "d_e", "d_hat_e", "cycle_cost"]


def trajectory_rows(sat_id: str, slot: int, traj: BatteryTrajectory, a: float) -> Iterable[list]:
    costs = per_period_costs(traj, a)
    for j in range(traj.J):
        yield [
            sat_id,
            slot,
            j + 1,
            f"{traj.b_s[j]:.6f}",
            f"{traj.b_e[j]:.6f}",
            f"{traj.b_s_next[j]:.6f}",
            f"{traj.d_e[j]:.6f}",
            f"{traj.d_hat_e[j]:.6f}",
            f"{costs[j]:.6f}",
        ]


def write_trajectory_csv(path, rows: Iterable[list]) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        w.writerows(rows)
    return path
