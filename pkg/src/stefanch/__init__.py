"""Cahn-Hilliard approximation of the Stefan problem with a dynamic boundary condition."""

__version__ = "0.1.0"
