"""Symbolic coding of train-track splitting dynamics and its thermodynamics."""

__version__ = "0.1.0"
