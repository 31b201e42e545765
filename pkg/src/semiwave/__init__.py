"""Numerical laboratory for delayed reaction-diffusion fronts."""

__version__ = "0.1.0"
