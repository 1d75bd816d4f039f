"""Battery-lifetime-aware scheduling of on-board training for LEO satellite federated learning."""

__version__ = "0.1.0"
