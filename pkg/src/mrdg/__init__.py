"""Adaptive multiresolution discontinuous Galerkin transport solver."""

__version__ = "0.1.0"
