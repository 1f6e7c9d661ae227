"""Frequency-varying optimisation controllers for aggregated frequency-response units."""

__version__ = "0.1.0"
