"""Simulation, control and analysis toolkit for the ARMADA 6-DoF arm."""

__version__ = "0.1.0"
