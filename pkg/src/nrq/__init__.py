"""Nehari-manifold / nonlinear Rayleigh quotient toolkit for two-parameter
nonlocal Phi-Laplacian problems on truncated grids."""

__version__ = "0.1.0"

from . import nfunction, grid, functionals, fibering, extremal, solver, calibration  # noqa: F401
