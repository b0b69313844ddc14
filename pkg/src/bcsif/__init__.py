"""Reduced BCS model with an imaginary magnetic field: gap solver, effective
potentials, two-band covariances and exact small-lattice verification."""

from bcsif.model import (
    DomainError,
    ModelParams,
    NumericalError,
    ValidationError,
    dispersion,
    momentum_grid,
)

__all__ = [
    "DomainError",
    "ModelParams",
    "NumericalError",
    "ValidationError",
    "dispersion",
    "momentum_grid",
]
__version__ = "0.1.0"
