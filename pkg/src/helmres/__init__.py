"""Scattering by periodic arrays of Helmholtz resonators on a ground plane."""

__version__ = "0.1.0"
