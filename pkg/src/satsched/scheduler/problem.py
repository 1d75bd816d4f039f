"""Problem data and the affine description of the relaxed feasible set.

The solver works on a scaled copy of the variables::

    x = (tau_s, tau_e, beta_e, beta_n, d, d_hat)     each of length J

with training times in units of ``tscale`` minutes and charges ``beta = b / B_max``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..energy import (
    LN10,
    BatterySpec,
    EnergyProfile,
    Schedule,
    TrainingTask,
    cycle_life_term,
)
from ..errors import InconsistentLengthsError, InfeasibleBudgetError
from ..orbital import SunEclipseTimeline

# Relative slack on the training-time budget before an instance counts as infeasible.
BUDGET_TOL = 1e-9

TAU_S, TAU_E, B_E, B_N, D, D_HAT = range(6)
BLOCK_NAMES = ("tau_s", "tau_e", "b_e", "b_s_next", "d_e", "d_hat_e")


@dataclass(frozen=True)
class ProblemInstance:
    timeline: SunEclipseTimeline
    profile: EnergyProfile
    task: TrainingTask
    battery: BatterySpec
    cap_s: np.ndarray = field(repr=False)
    cap_e: np.ndarray = field(repr=False)

    @property
    def J(self) -> int:
        return self.timeline.J

    @property
    def a(self) -> float:
        return self.battery.aging_constant

    @property
    def T_c(self) -> float:
        return self.task.duration_min

    @property
    def sunlight_len(self) -> np.ndarray:
        return self.timeline.sunlight_min

    @property
    def eclipse_len(self) -> np.ndarray:
        return self.timeline.eclipse_min

    @property
    def total_cap(self) -> float:
        return float(np.sum(self.cap_s) + np.sum(self.cap_e))

    @property
    def sunlight_sufficient(self) -> bool:
        return float(np.sum(self.cap_s)) >= self.T_c

    @property
    def is_tight(self) -> bool:
        """True when exactly one schedule meets the budget (every cap used, or T_c = 0)."""
        return self.T_c <= 0.0 or self.total_cap - self.T_c <= BUDGET_TOL * max(1.0, self.T_c)

    @property
    def tscale(self) -> float:
        return max(1.0, float(np.max(np.concatenate([self.cap_s, self.cap_e]))))


def build_problem(
    timeline: SunEclipseTimeline, profile: EnergyProfile, task: TrainingTask, battery: BatterySpec
) -> ProblemInstance:
    """Validate inputs and compute per-period usable training time.

    Sunlight time is capped both by the interval length and by the net harvest,
    since training in sunlight must not draw on the battery.
    """
    if profile.J != timeline.J:
        raise InconsistentLengthsError(f"profile has {profile.J} periods, timeline has {timeline.J}")
    net = np.asarray(profile.harvest_sunlight) - np.asarray(profile.demand_sunlight)
    cap_s = np.minimum(timeline.sunlight_min, np.maximum(0.0, net / task.power_W))
    cap_e = timeline.eclipse_min.copy()
    total = float(np.sum(cap_s) + np.sum(cap_e))
    if total < task.duration_min * (1.0 - BUDGET_TOL):
        raise InfeasibleBudgetError(
            f"usable training time {total:.6f} min is below the required {task.duration_min:.6f} min"
        )
    return ProblemInstance(timeline, profile, task, battery, cap_s, cap_e)


def phi(y, a: float):
    return cycle_life_term(y, a)


def phi_prime(y, a: float):
    y = np.asarray(y, dtype=float)
    return np.power(10.0, a * (y - 1.0)) * (1.0 + a * LN10 * y)


def phi_second(y, a: float):
    y = np.asarray(y, dtype=float)
    return a * LN10 * (a * LN10 * y + 2.0) * np.power(10.0, a * (y - 1.0))


def u_value(d_hat, a: float) -> float:
    return float(np.sum(phi(d_hat, a)))


def v_value(d, a: float) -> float:
    return float(np.sum(phi(d, a)))


def objective(d, d_hat, a: float) -> float:
    """Smooth difference-of-convex objective ``u(d_hat) - v(d)``."""
    return u_value(d_hat, a) - v_value(d, a)


@dataclass(frozen=True)
class ScaledForm:
    """``min F(x)  s.t.  A x = b,  G x <= h`` in scaled variables."""

    A: np.ndarray
    b: np.ndarray
    G: np.ndarray
    h: np.ndarray
    row_names: tuple[str, ...]
    relax_rows: np.ndarray  # indices of the relaxed battery rows in G
    tscale: float
    n: int

    def slot(self, block: int, J: int) -> slice:
        return slice(block * J, (block + 1) * J)


def scaled_form(inst: ProblemInstance) -> ScaledForm:
    J = inst.J
    n = 6 * J
    B = inst.battery.B_max
    ts = inst.tscale
    p = inst.task.power_W * ts / B
    net = (np.asarray(inst.profile.harvest_sunlight) - np.asarray(inst.profile.demand_sunlight)) / B
    ed_e = np.asarray(inst.profile.demand_eclipse) / B
    beta0 = inst.battery.B_0 / B

    def idx(block, j):
        return block * J + j

    A_rows, b_rows = [], []
    G_rows, h_rows, names = [], [], []
    relax = []

    def eq(coefs, rhs):
        row = np.zeros(n)
        for k, v in coefs:
            row[k] = v
        A_rows.append(row)
        b_rows.append(rhs)

    def ineq(coefs, rhs, name):
        row = np.zeros(n)
        for k, v in coefs:
            row[k] = v
        G_rows.append(row)
        h_rows.append(rhs)
        names.append(name)

    for j in range(J):
        eq([(idx(B_N, j), 1.0), (idx(B_E, j), -1.0), (idx(TAU_E, j), p)], -ed_e[j])
        eq([(idx(D, j), 1.0), (idx(B_E, j), 1.0)], 1.0)
        eq([(idx(D_HAT, j), 1.0), (idx(B_N, j), 1.0)], 1.0)
    eq([(idx(TAU_S, j), 1.0) for j in range(J)] + [(idx(TAU_E, j), 1.0) for j in range(J)], inst.T_c / ts)

    for j in range(J):
        if j == 0:
            relax.append(len(G_rows))
            ineq([(idx(B_E, 0), 1.0), (idx(TAU_S, 0), p)], beta0 + net[0], "relax[1]")
        else:
            relax.append(len(G_rows))
            ineq([(idx(B_E, j), 1.0), (idx(B_N, j - 1), -1.0), (idx(TAU_S, j), p)], net[j], f"relax[{j + 1}]")
        ineq([(idx(B_E, j), 1.0)], 1.0, f"b_e[{j + 1}]<=B_max")
        ineq([(idx(B_E, j), -1.0)], 0.0, f"b_e[{j + 1}]>=0")
        ineq([(idx(B_N, j), 1.0)], 1.0, f"b_s_next[{j + 1}]<=B_max")
        ineq([(idx(B_N, j), -1.0)], 0.0, f"b_s_next[{j + 1}]>=0")
        for block, cap, label in ((TAU_S, inst.cap_s[j], "tau_s"), (TAU_E, inst.cap_e[j], "tau_e")):
            if cap > 0:
                ineq([(idx(block, j), 1.0)], cap / ts, f"{label}[{j + 1}]<=cap")
                ineq([(idx(block, j), -1.0)], 0.0, f"{label}[{j + 1}]>=0")
            else:
                eq([(idx(block, j), 1.0)], 0.0)

    return ScaledForm(
        np.array(A_rows),
        np.array(b_rows),
        np.array(G_rows),
        np.array(h_rows),
        tuple(names),
        np.array(relax, dtype=int),
        ts,
        n,
    )


def pack(inst: ProblemInstance, tau_s, tau_e, b_e, b_n) -> np.ndarray:
    """Scaled variable vector from physical quantities (minutes, W·min)."""
    B = inst.battery.B_max
    ts = inst.tscale
    be = np.asarray(b_e, dtype=float) / B
    bn = np.asarray(b_n, dtype=float) / B
    return np.concatenate([np.asarray(tau_s) / ts, np.asarray(tau_e) / ts, be, bn, 1.0 - be, 1.0 - bn])


def unpack(inst: ProblemInstance, x: np.ndarray) -> dict[str, np.ndarray]:
    """Physical quantities from a scaled vector."""
    J = inst.J
    B = inst.battery.B_max
    ts = inst.tscale
    blocks = [x[k * J:(k + 1) * J] for k in range(6)]
    return {
        "tau_s": blocks[TAU_S] * ts,
        "tau_e": blocks[TAU_E] * ts,
        "b_e": blocks[B_E] * B,
        "b_s_next": blocks[B_N] * B,
        "d_e": blocks[D].copy(),
        "d_hat_e": blocks[D_HAT].copy(),
    }


def relaxation_gap(inst: ProblemInstance, tau_s, b_e, b_n) -> np.ndarray:
    """``min{b_s + E^h - E^d - P_c tau_s, B_max} - b_e`` per period (W·min); zero when tight."""
    B = inst.battery.B_max
    net = np.asarray(inst.profile.harvest_sunlight) - np.asarray(inst.profile.demand_sunlight)
    b_s = np.concatenate([[inst.battery.B_0], np.asarray(b_n)[:-1]])
    bound = np.minimum(b_s + net - inst.task.power_W * np.asarray(tau_s), B)
    return bound - np.asarray(b_e)


def repair_schedule(inst: ProblemInstance, tau_s, tau_e, snap: float = 1e-7) -> Schedule:
    """Clip to the boxes, snap near-bound values, then restore the exact budget."""
    caps = np.concatenate([inst.cap_s, inst.cap_e])
    tau = np.clip(np.concatenate([tau_s, tau_e]), 0.0, caps)
    tol = snap * inst.tscale
    tau[tau < tol] = 0.0
    near = caps - tau < tol
    tau[near] = caps[near]
    for _ in range(3):
        r = inst.T_c - tau.sum()
        if abs(r) <= 1e-12 * max(1.0, inst.T_c):
            break
        room = caps - tau if r > 0 else tau.copy()
        total_room = room.sum()
        if total_room <= 0:
            break
        tau = np.clip(tau + r * room / total_room, 0.0, caps)
    J = inst.J
    return Schedule(tau[:J], tau[J:])
