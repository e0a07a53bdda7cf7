"""Numerical laboratory for compressible flow with inflow/outflow boundaries."""

__version__ = "0.1.0"
