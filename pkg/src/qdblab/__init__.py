"""Simulation and analysis toolkit for qubit-based distance bounding."""

__version__ = "0.1.0"
