"""Discrete random dynamical systems driven by shift maps."""

from .adapted_norm import RandomNorm, SandwichResult, adapted_random_norm, sandwich_check
from .cocycle import Cocycle, RDSHandle, cocycle_products, rds_from_system, system_from_cocycle
from .linearize import RDSLinearization, orbit_conjugation_residual, rds_linearize
from .mds import Omega, ShiftMDS, make_shift_mds
from .spectrum import SpectrumReport, lyapunov_spectrum

__all__ = [
    "Cocycle",
    "Omega",
    "RDSHandle",
    "RDSLinearization",
    "RandomNorm",
    "SandwichResult",
    "ShiftMDS",
    "SpectrumReport",
    "adapted_random_norm",
    "cocycle_products",
    "lyapunov_spectrum",
    "make_shift_mds",
    "orbit_conjugation_residual",
    "rds_from_system",
    "rds_linearize",
    "sandwich_check",
    "system_from_cocycle",
]
