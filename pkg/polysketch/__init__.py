"""
polysketch - random-feature sketches for dot-product and Gaussian kernels
"""
from polysketch.errors import ConfigurationError, DimensionError, NumericalError, PolysketchError
from polysketch.models import Allocation, FieldKind, KernelSpec, SketchFamily, SketchSpec

__version__ = "1.0.0"

__all__ = [
    "Allocation",
    "ConfigurationError",
    "DimensionError",
    "FieldKind",
    "KernelSpec",
    "NumericalError",
    "PolysketchError",
    "SketchFamily",
    "SketchSpec",
]
