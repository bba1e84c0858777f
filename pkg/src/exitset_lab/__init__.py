"""Numerical laboratory for prescribed scalar curvature on flat tori."""

__version__ = "0.1.0"
