"""Axisymmetric harmonic maps into complex hyperbolic space with prescribed rod singularities.

Modules
-------
geometry
    Target metric, tension, distance and gauge isometries.
rods
    Gap/rod layout on the axis and the singular potential ``u0``.
seed
    Approximately harmonic seed map with exact jets.
discretization, kernels, solver
    Finite-volume energy, Newton solver and exhaustion in ``R``.
diagnostics
    Distance bounds, maximum principle and subharmonicity checks.
spacetime
    Reconstruction of the stationary metric and conical deficits.
"""

from ._accel import backend
from .errors import ConfigError, DomainError, SolverError

__version__ = "0.1.0"

__all__ = ["ConfigError", "DomainError", "SolverError", "backend", "__version__"]
