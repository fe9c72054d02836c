"""Numerical laboratory for sigma_k / sigma_l conformal curvature flows."""

__version__ = "0.1.0"
