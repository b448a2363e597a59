"""Uncertainty quantification of axon activation thresholds under random
dispersive tissue properties."""

__version__ = "0.1.0"
