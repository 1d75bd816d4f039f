"""Scenario loading, campaign execution and report export."""

from .campaign import CampaignReport, ModeRun, SweepPoint, capacity_sweep, compute_geometry, run_campaign
from .export import export
from .scenario import Scenario, bundled_scenario, load_scenario, parse_scenario

__all__ = [
    "CampaignReport",
    "ModeRun",
    "Scenario",
    "SweepPoint",
    "bundled_scenario",
    "capacity_sweep",
    "compute_geometry",
    "export",
    "load_scenario",
    "parse_scenario",
    "run_campaign",
]
