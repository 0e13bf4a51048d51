"""Numerical laboratory for paradifferential calculus and 2D Euler flow maps."""

__version__ = "0.1.0"
