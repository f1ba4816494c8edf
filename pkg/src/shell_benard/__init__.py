"""Rayleigh-Bénard convection on a spherical shell: linear spectrum,
critical Rayleigh number, center-manifold reduction and reduced dynamics."""

__version__ = "0.1.0"
