"""Approximate-deconvolution Leray reduced order model for 2D Navier-Stokes."""

__version__ = "0.1.0"
