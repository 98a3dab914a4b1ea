"""Volumes and area densities of moduli of flat cone spheres."""

__version__ = "0.1.0"

from .signature import AngleSignature, validate_signature, signature_from_text  # noqa: E402
from .measure import Measure1D  # noqa: E402
from .recurrence import SolverConfig, density, volume, length_stats  # noqa: E402

__all__ = [
    "AngleSignature",
    "Measure1D",
    "SolverConfig",
    "density",
    "length_stats",
    "signature_from_text",
    "validate_signature",
    "volume",
]
