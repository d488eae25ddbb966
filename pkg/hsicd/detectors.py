"""
Change detectors: morphological-profile distance, neighbourhood detector on Tucker-denoised
cubes, score fusion, pixelwise baselines and the fused two-branch pipeline
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, Tuple, TypeVar

import numpy as np

from .models import BiTemporalPair, ChangeMap, ConfigError, DataError, HyperCube, Method
from .morphology import FeatureStack, build_feature_stack
from .patch_tensor import denoise_cube
from .schemas import PipelineConfig
from .spectral_pca import first_principal_component, quantize_to_gray

logger = logging.getLogger(__name__)

T = TypeVar("T")

# The 8-neighbourhood, row-major
NEIGHBOUR_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def _require_same_shape(y1: HyperCube, y2: HyperCube) -> None:
    if y1.shape != y2.shape:
        raise DataError(f"cube dimensions differ: {y1.shape} vs {y2.shape}")


def _per_date(fn: Callable[[HyperCube], T], pair: BiTemporalPair, workers: int = 1) -> Tuple[T, T]:
    """Apply `fn` to both dates, on a thread pool when workers > 1."""
    if workers > 1:
        with ThreadPoolExecutor(max_workers=min(workers, 2)) as pool:
            first, second = pool.map(fn, (pair.t1, pair.t2))
        return first, second
    return fn(pair.t1), fn(pair.t2)


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------

def morph_ad(f1: FeatureStack, f2: FeatureStack) -> ChangeMap:
    """Sum over feature bands of the absolute difference between dates."""
    if f1.bands.shape != f2.bands.shape:
        raise DataError(f"feature stacks differ in shape: {f1.bands.shape} vs {f2.bands.shape}")
    if f1.provenance != f2.provenance:
        raise DataError("feature stacks were built with different band orders")
    return ChangeMap(np.abs(f1.bands - f2.bands).sum(axis=0))


def angle_weight_map(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """arctan(cos^2) of the angle between spectra along the last axis; 0 where either is all-zero."""
    norms = np.linalg.norm(x, axis=-1) * np.linalg.norm(y, axis=-1)
    dots = np.sum(x * y, axis=-1)
    cosine = np.divide(dots, norms, out=np.zeros_like(norms), where=norms > 0)
    return np.arctan(np.clip(cosine, -1.0, 1.0) ** 2)


def spectral_angle_weight(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError(f"spectra must be 1-D of equal length, got {x.shape} and {y.shape}")
    return float(angle_weight_map(x, y))


def neighborhood_detector(y1: HyperCube, y2: HyperCube) -> ChangeMap:
    """
    r_i = || sum over the 8 neighbours j of (y_j^2 - x_j^2) ||_2 * W(x_i, y_i)

    x from the first date, y from the second, squares taken per band; the image
    border is extended by edge replication.
    """
    _require_same_shape(y1, y2)
    rows, cols = y1.height, y1.width
    squared_gap = y2.values ** 2 - y1.values ** 2
    padded = np.pad(squared_gap, ((1, 1), (1, 1), (0, 0)), mode="edge")
    total = np.zeros_like(squared_gap)
    for dr, dc in NEIGHBOUR_OFFSETS:
        total += padded[1 + dr:1 + dr + rows, 1 + dc:1 + dc + cols, :]
    weight = angle_weight_map(y1.values, y2.values)
    return ChangeMap(np.linalg.norm(total, axis=-1) * weight)


def normalize_scores(change_map: ChangeMap) -> np.ndarray:
    """Min-max scale to [0, 1]; a constant map becomes all zeros."""
    score = change_map.score
    low, high = score.min(), score.max()
    if high == low:
        return np.zeros_like(score)
    return (score - low) / (high - low)


def fuse(r1: ChangeMap, r2: ChangeMap, a: float = 0.5, b: float = 0.5) -> ChangeMap:
    """a * R1 + b * R2 on independently min-max normalized maps."""
    if r1.shape != r2.shape:
        raise DataError(f"change maps differ in shape: {r1.shape} vs {r2.shape}")
    if a < 0 or b < 0 or a + b <= 0:
        raise ConfigError(f"fusion weights must be >= 0 with a + b > 0, got a={a}, b={b}")
    return ChangeMap(a * normalize_scores(r1) + b * normalize_scores(r2))


# ---------------------------------------------------------------------------
# Pixelwise baselines
# ---------------------------------------------------------------------------

def baseline_ad(y1: HyperCube, y2: HyperCube) -> ChangeMap:
    _require_same_shape(y1, y2)
    return ChangeMap(np.abs(y1.values - y2.values).sum(axis=-1))


def baseline_ed(y1: HyperCube, y2: HyperCube) -> ChangeMap:
    _require_same_shape(y1, y2)
    return ChangeMap(np.linalg.norm(y1.values - y2.values, axis=-1))


def baseline_aad(y1: HyperCube, y2: HyperCube) -> ChangeMap:
    _require_same_shape(y1, y2)
    return ChangeMap(np.abs((y1.values - y2.values).mean(axis=-1)))


# ---------------------------------------------------------------------------
# Branches and the fused pipeline
# ---------------------------------------------------------------------------

def date_features(cube: HyperCube, cfg: PipelineConfig) -> FeatureStack:
    gray = quantize_to_gray(first_principal_component(cube))
    return build_feature_stack(gray, cfg.thresholds, cfg.connectivity)


def morph_branch(pair: BiTemporalPair, cfg: PipelineConfig, workers: int = 1) -> ChangeMap:
    f1, f2 = _per_date(lambda cube: date_features(cube, cfg), pair, workers)
    r1 = morph_ad(f1, f2)
    logger.info("[DETECT] morphology branch: %d bands, score max %.4g", f1.count, r1.score.max())
    return r1


def tensor_branch(pair: BiTemporalPair, cfg: PipelineConfig, workers: int = 1) -> ChangeMap:
    y1, y2 = _per_date(lambda cube: denoise_cube(cube, cfg.patch_size, cfg.als), pair, workers)
    r2 = neighborhood_detector(y1, y2)
    logger.info("[DETECT] tensor branch: w=%d, score max %.4g", cfg.patch_size, r2.score.max())
    return r2


def jmpt_detect(pair: BiTemporalPair, cfg: PipelineConfig, workers: int = 1) -> ChangeMap:
    r1 = morph_branch(pair, cfg, workers)
    r2 = tensor_branch(pair, cfg, workers)
    return fuse(r1, r2, cfg.fusion.a, cfg.fusion.b)


def _pixelwise(baseline: Callable[[HyperCube, HyperCube], ChangeMap]):
    def run(pair: BiTemporalPair, cfg: PipelineConfig, workers: int = 1) -> ChangeMap:
        return baseline(pair.t1, pair.t2)
    return run


DETECTORS: Dict[Method, Callable[..., ChangeMap]] = {
    Method.JMPT: jmpt_detect,
    Method.MORPH: morph_branch,
    Method.TENSOR: tensor_branch,
    Method.AD: _pixelwise(baseline_ad),
    Method.ED: _pixelwise(baseline_ed),
    Method.AAD: _pixelwise(baseline_aad),
}


def detect(pair: BiTemporalPair, cfg: PipelineConfig, workers: int = 1) -> ChangeMap:
    logger.info("[DETECT] method=%s on %dx%dx%d", cfg.method.value, *pair.shape)
    return DETECTORS[cfg.method](pair, cfg, workers)
