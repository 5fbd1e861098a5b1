"""Reduced-basis toolkit for 1D nonlocal diffusion and fractional Laplace problems."""

__version__ = "0.1.0"
