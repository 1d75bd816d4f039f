"""Battery-aware training schedules and the energy-agnostic baseline."""

from ..energy import Schedule
from .baseline import energy_agnostic_schedule
from .ccp import (
    CcpDiagnostics,
    CcpIterate,
    CcpSettings,
    ccp_solve,
    feasible_init,
    greedy_schedule,
    iterate_from_schedule,
    linearized_v_coefficient,
    solve_surrogate,
)
from .oracle import OracleResult, grid_oracle
from .problem import ProblemInstance, build_problem, objective, relaxation_gap

__all__ = [
    "CcpDiagnostics",
    "CcpIterate",
    "CcpSettings",
    "OracleResult",
    "ProblemInstance",
    "Schedule",
    "build_problem",
    "ccp_solve",
    "energy_agnostic_schedule",
    "feasible_init",
    "greedy_schedule",
    "grid_oracle",
    "iterate_from_schedule",
    "linearized_v_coefficient",
    "objective",
    "relaxation_gap",
    "solve_surrogate",
]
