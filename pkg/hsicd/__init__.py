"""
hsicd: hyperspectral change detection from morphological attribute profiles and
patch-tensor Tucker denoising
"""
from .models import (
    BinaryMask,
    BiTemporalPair,
    ChangeMap,
    ConfigError,
    DataError,
    GrayImage,
    HsicdError,
    HyperCube,
)

__version__ = "0.1.0"

__all__ = [
    "BinaryMask",
    "BiTemporalPair",
    "ChangeMap",
    "ConfigError",
    "DataError",
    "GrayImage",
    "HsicdError",
    "HyperCube",
]
