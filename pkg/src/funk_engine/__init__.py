"""
Funk Engine Module

Core components for the circular-mean (Funk) transform: scan geometry and
incidence diagnostics, discrete fields, forward and dual transforms, the
preconditioned Kaczmarz solver and constructive range conditions.
"""

from .fields import GridDensity, PhantomSpec, Sinogram, make_phantom
from .geometry import ScanGeometry, SphericalIncidence
from .kaczmarz import KaczmarzConfig, reconstruct
from .range_conditions import Annihilator, build_annihilator
from .transform import FunkOperator, backproject, dual, forward

__all__ = [
    "Annihilator",
    "FunkOperator",
    "GridDensity",
    "KaczmarzConfig",
    "PhantomSpec",
    "ScanGeometry",
    "Sinogram",
    "SphericalIncidence",
    "backproject",
    "build_annihilator",
    "dual",
    "forward",
    "make_phantom",
    "reconstruct",
]
