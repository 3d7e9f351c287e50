"""Metrics with a degenerate first eigenvalue whose complex eigenfunction has a knotted nodal line."""

__version__ = "0.1.0"
