"""Energy-agnostic baseline: train contiguously from the moment the model arrives."""

from __future__ import annotations

import numpy as np

from ..energy import Schedule
from ..errors import DomainError, HorizonOverflowError
from .problem import ProblemInstance


def energy_agnostic_schedule(inst: ProblemInstance, start_time: float | None = None) -> Schedule:
    """Overlap of ``[start, start + T_c]`` with every sunlight and eclipse interval.

    ``start_time`` is in seconds on the timeline's clock and defaults to ``t0``.
    """
    tl = inst.timeline
    start = tl.t0 if start_time is None else float(start_time)
    if not tl.t0 <= start <= tl.t1:
        raise DomainError(f"start time {start} outside the horizon [{tl.t0}, {tl.t1}]")
    end = start + 60.0 * inst.T_c
    if end > tl.t1 + 1e-6:
        raise HorizonOverflowError(
            f"training [{start:.3f}, {end:.3f}] s runs past the horizon end {tl.t1:.3f} s"
        )
    end = min(end, tl.t1)
    tau_s = np.zeros(tl.J)
    tau_e = np.zeros(tl.J)
    for j, p in enumerate(tl.periods):
        tau_s[j] = max(0.0, min(end, p.eclipse_start) - max(start, p.sunlight_start)) / 60.0
        tau_e[j] = max(0.0, min(end, p.next_sunlight_start) - max(start, p.eclipse_start)) / 60.0
    # floating-point drift from the seconds/minutes round trip
    total = tau_s.sum() + tau_e.sum()
    if total > 0 and inst.T_c > 0:
        scale = inst.T_c / total
        tau_s *= scale
        tau_e *= scale
    return Schedule(tau_s, tau_e)
