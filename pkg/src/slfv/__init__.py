"""Simulation and analysis of the infinity-parent SLFV growth process and the two-columns growth process."""

__version__ = "0.1.0"
