"""Numerical spectral analysis of Schrodinger operators with complex potentials."""

__version__ = "0.1.0"
