"""Regularized traces of -Δ + q on Zoll-type spheres, checked numerically."""

__version__ = "0.1.0"
