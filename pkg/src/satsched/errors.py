"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SatSchedError(Exception):
    """Base class for all package errors."""


class DomainError(SatSchedError, ValueError):
    """An argument lies outside the domain of an operation."""


class BatteryDepletedError(SatSchedError):
    """Battery charge would drop below zero at the end of an eclipse."""

    def __init__(self, period: int, charge: float):
        super().__init__(f"battery depleted at end of eclipse {period}: charge {charge:.6f} W·min < 0")
        self.period = period
        self.charge = charge


class SunlightDeficitError(SatSchedError):
    """Sunlight consumption exceeds harvest, so the battery would discharge in sunlight."""

    def __init__(self, period: int, surplus: float):
        super().__init__(f"sunlight deficit in period {period}: net harvest {surplus:.6f} W·min < 0")
        self.period = period
        self.surplus = surplus


class InconsistentLengthsError(SatSchedError, ValueError):
    pass


class InfeasibleBudgetError(SatSchedError):
    """Usable training time over the horizon is smaller than the required training time."""


class HorizonOverflowError(SatSchedError):
    """A contiguous training run does not fit before the end of the horizon."""


class InnerSolverError(SatSchedError):
    """The convex subproblem solver hit its iteration limit."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class NonConvergenceError(SatSchedError):
    """The outer concave-convex loop hit its iteration limit."""

    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class TrainingError(SatSchedError):
    """Local training produced non-finite values."""

    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ScenarioError(SatSchedError, ValueError):
    """Scenario file could not be parsed or failed validation."""
