"""Simulation and analysis toolkit for a continuously monitored open-Rabi-model sensor."""

__version__ = "0.1.0"
