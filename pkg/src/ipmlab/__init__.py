"""Pseudo-spectral laboratory for the 2D incompressible porous media equation."""

__version__ = "0.1.0"
