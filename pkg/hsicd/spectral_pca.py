"""
First principal component of a cube and its 8-bit quantization
"""
import logging
from typing import Tuple

import numpy as np
from scipy import linalg

from .models import DataError, GrayImage, HyperCube

logger = logging.getLogger(__name__)


def _pixels(cube: HyperCube) -> np.ndarray:
    if cube.height * cube.width < 2:
        raise DataError("principal component analysis needs at least 2 pixels")
    return cube.values.reshape(-1, cube.bands)


def orient_sign(vector: np.ndarray) -> np.ndarray:
    """Flip a vector so its largest-magnitude component is positive."""
    return -vector if vector[np.argmax(np.abs(vector))] < 0 else vector


def principal_axis(cube: HyperCube) -> Tuple[np.ndarray, float, float]:
    """
    Leading eigenpair of the band covariance (divisor N).
    Returns (unit loading vector, its eigenvalue, total variance).
    """
    pixels = _pixels(cube)
    centered = pixels - pixels.mean(axis=0)
    covariance = centered.T @ centered / pixels.shape[0]
    eigenvalues, eigenvectors = linalg.eigh(covariance)
    loading = orient_sign(eigenvectors[:, -1])
    return loading, float(eigenvalues[-1]), float(np.trace(covariance))


def explained_variance_ratio(cube: HyperCube) -> float:
    _, eigenvalue, total = principal_axis(cube)
    return eigenvalue / total if total > 0 else 0.0


def first_principal_component(cube: HyperCube) -> np.ndarray:
    """PC1 score image; all zeros when every pixel carries the same spectrum."""
    pixels = _pixels(cube)
    if not np.ptp(pixels, axis=0).any():
        logger.info("[PCA] zero-variance cube, PC1 is identically 0")
        return np.zeros((cube.height, cube.width))
    centered = pixels - pixels.mean(axis=0)
    loading, eigenvalue, total = principal_axis(cube)
    logger.debug("[PCA] PC1 explains %.4f of the variance", eigenvalue / total)
    return (centered @ loading).reshape(cube.height, cube.width)


def quantize_to_gray(pc1: np.ndarray) -> GrayImage:
    """Min-max rescale to [0, 255] and round half to even; a constant image maps to 128."""
    pc1 = np.asarray(pc1, dtype=np.float64)
    if not np.isfinite(pc1).all():
        raise DataError("cannot quantize an image with non-finite values")
    low, high = pc1.min(), pc1.max()
    if high == low:
        return GrayImage(np.full(pc1.shape, 128, dtype=np.uint8))
    scaled = (pc1 - low) * (255.0 / (high - low))
    return GrayImage(np.clip(np.rint(scaled), 0, 255).astype(np.uint8))
