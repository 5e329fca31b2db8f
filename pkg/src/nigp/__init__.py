"""Simulation and verification tools for the normalized inverse-Gaussian process."""

__version__ = "0.1.0"
