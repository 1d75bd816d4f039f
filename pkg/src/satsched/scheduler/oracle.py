"""Exhaustive grid search over training schedules, for checking the solver.

Every period's sunlight and eclipse training time is restricted to multiples of
``step`` minutes. The search walks the periods in order and keeps, for each amount
of training time already placed, only the (charge, cost) pairs not dominated by a
state with at least as much charge and no more cost. A fuller battery never costs
more later on, so the pruning is exact and the result equals brute-force
enumeration of the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..energy import Schedule, cycle_life_term
from ..errors import DomainError, InfeasibleBudgetError
from .problem import ProblemInstance


@dataclass(frozen=True)
class OracleResult:
    cost: float
    schedule: Schedule
    states_visited: int


def _pareto(k: np.ndarray, b: np.ndarray, cost: np.ndarray) -> np.ndarray:
    """Indices of states that are not dominated within their ``k`` group."""
    order = np.lexsort((cost, -b, k))
    ks, cs = k[order], cost[order]
    keep = np.zeros(order.size, dtype=bool)
    start = 0
    bounds = np.nonzero(np.diff(ks))[0] + 1
    for stop in list(bounds) + [order.size]:
        c = cs[start:stop]
        run_min = np.minimum.accumulate(c)
        prev = np.concatenate([[np.inf], run_min[:-1]])
        keep[start:stop] = c < prev - 1e-15
        start = stop
    return order[keep]


def grid_oracle(inst: ProblemInstance, step: float = 0.1, max_states: int = 50_000_000) -> OracleResult:
    """Cheapest schedule on the ``step``-minute grid (cost from the battery recursion)."""
    K = inst.T_c / step
    if abs(K - round(K)) > 1e-9 * max(1.0, K):
        raise DomainError(f"T_c={inst.T_c} is not a multiple of the grid step {step}")
    K = int(round(K))
    B = inst.battery.B_max
    P = inst.task.power_W
    a = inst.a
    tol = 1e-9 * B
    net = np.asarray(inst.profile.harvest_sunlight) - np.asarray(inst.profile.demand_sunlight)
    ed_e = np.asarray(inst.profile.demand_eclipse)
    ns = np.floor(inst.cap_s / step + 1e-9).astype(int)
    ne = np.floor(inst.cap_e / step + 1e-9).astype(int)
    reach = np.concatenate([np.cumsum((ns + ne)[::-1])[::-1], [0]])  # steps still placeable from period j on
    if reach[0] < K:
        raise InfeasibleBudgetError("grid cannot hold the required training time")

    k = np.array([0])
    b = np.array([inst.battery.B_0])
    cost = np.array([0.0])
    history = []  # per period: (parent index, i_s, i_e) of surviving states
    visited = 0
    for j in range(inst.J):
        last = j == inst.J - 1
        n_states = k.size
        if last:
            # only moves that land exactly on the budget
            ms = np.tile(np.arange(ns[j] + 1), n_states)
            parent = np.repeat(np.arange(n_states), ns[j] + 1)
            me = K - k[parent] - ms
            ok = (me >= 0) & (me <= ne[j])
        else:
            S, E = np.meshgrid(np.arange(ns[j] + 1), np.arange(ne[j] + 1), indexing="ij")
            S, E = S.ravel(), E.ravel()
            if n_states * S.size > max_states:
                raise DomainError(f"grid oracle too large: {n_states} states x {S.size} moves in period {j + 1}")
            parent = np.repeat(np.arange(n_states), S.size)
            ms = np.tile(S, n_states)
            me = np.tile(E, n_states)
            ok = np.ones(parent.size, dtype=bool)
        visited += parent.size
        nk = k[parent] + ms + me
        ok &= (nk == K) if last else (nk <= K) & (nk + reach[j + 1] >= K)
        surplus = net[j] - P * step * ms
        ok &= surplus >= -tol
        b_e = np.minimum(b[parent] + np.maximum(surplus, 0.0), B)
        b_n = b_e - ed_e[j] - P * step * me
        ok &= b_n >= -tol
        parent, ms, me, nk, b_e, b_n = parent[ok], ms[ok], me[ok], nk[ok], b_e[ok], np.maximum(b_n[ok], 0.0)
        if parent.size == 0:
            raise InfeasibleBudgetError("no grid schedule keeps the battery non-negative")
        d1 = (B - b_e) / B
        d2 = (B - b_n) / B
        inc = np.where(d2 > d1, cycle_life_term(d2, a) - cycle_life_term(d1, a), 0.0)
        nc = cost[parent] + inc
        if not last:
            # charge above this level is topped up to B_max in the next sunlight whatever is trained there
            b_n = np.minimum(b_n, B - net[j + 1] + P * step * ns[j + 1])
        keep = _pareto(nk, b_n, nc)
        history.append((parent[keep], ms[keep], me[keep]))
        k, b, cost = nk[keep], b_n[keep], nc[keep]

    best = int(np.argmin(cost))
    tau_s = np.zeros(inst.J)
    tau_e = np.zeros(inst.J)
    idx = best
    for j in range(inst.J - 1, -1, -1):
        parent, ms, me = history[j]
        tau_s[j] = ms[idx] * step
        tau_e[j] = me[idx] * step
        idx = parent[idx]
    return OracleResult(float(cost[best]), Schedule(tau_s, tau_e), visited)


def grid_size(inst: ProblemInstance, step: float = 0.1) -> float:
    """Rough count of raw grid points, for deciding whether an instance is tractable."""
    per = [(math.floor(cs / step) + 1) * (math.floor(ce / step) + 1) for cs, ce in zip(inst.cap_s, inst.cap_e)]
    return float(np.prod(per))
