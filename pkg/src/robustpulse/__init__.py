"""Detuning-robust single-qubit pulses from a neural-network control field."""

__version__ = "0.1.0"
