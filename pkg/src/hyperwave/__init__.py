"""Numerical experiments on wave maps from the hyperbolic plane into itself."""

__version__ = "0.1.0"
