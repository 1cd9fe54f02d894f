"""Numerical laboratory for interior W^{2,p} estimates of the Laplacian and heat operator."""

__version__ = "0.1.0"
