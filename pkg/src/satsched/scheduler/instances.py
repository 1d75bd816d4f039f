"""Random small problem instances for property tests and the oracle comparison."""

from __future__ import annotations

import numpy as np

from ..energy import BatterySpec, EnergyProfile, TrainingTask
from ..errors import InfeasibleBudgetError
from ..orbital import SunEclipseTimeline
from .ccp import feasible_init
from .problem import ProblemInstance, build_problem


def _round(x, step):
    return np.round(np.asarray(x) / step) * step


def random_instance(
    rng: np.random.Generator,
    J: int | None = None,
    max_J: int = 3,
    max_len: float = 8.0,
    power_W: float = 50.0,
    full_recharge_prob: float = 0.4,
    step: float = 0.1,
) -> ProblemInstance:
    """Feasible instance with period lengths and T_c on the ``step`` grid.

    Mixes full-recharge profiles with partially recharging ones so that the
    start-of-eclipse DoD is not always zero.
    """
    for _ in range(1000):
        n = int(J if J is not None else rng.integers(1, max_J + 1))
        s_len = _round(rng.uniform(step, max_len, n), step)
        e_len = _round(rng.uniform(step, max_len, n), step)
        tl = SunEclipseTimeline.from_durations(s_len, e_len)
        B = float(rng.uniform(300.0, 2000.0))
        bat = BatterySpec(B, float(rng.uniform(0.4, 1.0)) * B, float(rng.uniform(0.2, 2.0)))
        if rng.random() < full_recharge_prob:
            prof = EnergyProfile.full_recharge(tl, bat, TrainingTask(power_W, 0.0))
        else:
            ed_s = rng.uniform(0.0, 50.0, n) * (rng.random(n) < 0.5)
            ed_e = rng.uniform(0.0, 100.0, n) * (rng.random(n) < 0.5)
            eh = ed_s + rng.uniform(0.0, 0.6 * B, n)
            prof = EnergyProfile(tuple(ed_s), tuple(ed_e), tuple(eh))
        probe = build_problem(tl, prof, TrainingTask(power_W, 0.0), bat)
        hi = float(np.floor(probe.total_cap / step + 1e-9)) * step
        if hi <= 0:
            continue
        tc = float(_round(rng.uniform(0.0, hi), step))
        tc = min(tc, hi)
        try:
            inst = build_problem(tl, prof, TrainingTask(power_W, tc), bat)
            feasible_init(inst)
        except InfeasibleBudgetError:
            continue
        return inst
    raise RuntimeError("could not draw a feasible instance")


def symmetric_two_eclipse_instance(
    sunlight_min: float, eclipse_min: float, eclipse_training_min: float, battery: BatterySpec, power_W: float = 50.0
) -> ProblemInstance:
    """Two identical periods with full recharge, and a budget that forces eclipse training."""
    tl = SunEclipseTimeline.from_durations([sunlight_min] * 2, [eclipse_min] * 2)
    task = TrainingTask(power_W, 2 * sunlight_min + eclipse_training_min)
    prof = EnergyProfile.full_recharge(tl, battery, task)
    return build_problem(tl, prof, task, battery)
