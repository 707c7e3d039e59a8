"""Numerical machinery for attenuated geodesic ray transforms and polyharmonic inverse problems."""
__version__ = "0.1.0"
