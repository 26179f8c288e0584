"""Discrete wave-packet model of the Hilbert transform along one-variable vector fields."""

__version__ = "0.1.0"
