"""Adaptive-feedback quantum phase estimation: simulation, training and scaling analysis."""

__version__ = "0.1.0"
