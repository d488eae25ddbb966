"""
Domain models for the change-detection pipeline: raster types, enums and errors
"""
import enum
from dataclasses import dataclass

import numpy as np


class HsicdError(Exception):
    """Base class for every error raised by the library."""


class DataError(HsicdError, ValueError):
    """Input data (files, arrays, scenes) violates a documented contract."""


class ConfigError(HsicdError, ValueError):
    """Configuration is invalid or inconsistent."""


class TreeKind(str, enum.Enum):
    MAX = "max"
    MIN = "min"


class Attribute(str, enum.Enum):
    AREA = "area"
    HEIGHT = "height"
    VOLUME = "volume"
    DIAG = "diag"
    STD = "std"

    @property
    def increasing(self) -> bool:
        return self is not Attribute.STD


class FilterRule(str, enum.Enum):
    PRUNE = "prune"    # a removed node takes all its descendants with it
    DIRECT = "direct"  # every node judged on its own value


class Method(str, enum.Enum):
    JMPT = "jmpt"
    MORPH = "morph"
    TENSOR = "tensor"
    AD = "ad"
    ED = "ed"
    AAD = "aad"


class BinarizePolicy(str, enum.Enum):
    PERCENTILE = "percentile"
    OTSU = "otsu"


# Mask labels
UNCHANGED = 0
CHANGED = 1
IGNORE = 255
MASK_LABELS = (UNCHANGED, CHANGED, IGNORE)


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class HyperCube:
    """Rows x cols x bands reflectance cube, stored as float64."""
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 3:
            raise DataError(f"cube must be 3-D (rows, cols, bands), got shape {values.shape}")
        if min(values.shape) < 1:
            raise DataError(f"cube dimensions must all be >= 1, got {values.shape}")
        bad = ~np.isfinite(values)
        if bad.any():
            r, c, b = (int(i) for i in np.argwhere(bad)[0])
            raise DataError(f"non-finite value at (row={r}, col={c}, band={b})")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def bands(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self):
        return self.values.shape

    def __eq__(self, other):
        if not isinstance(other, HyperCube):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True)
class BiTemporalPair:
    """Two co-registered acquisitions of the same scene."""
    t1: HyperCube
    t2: HyperCube

    def __post_init__(self):
        if self.t1.shape != self.t2.shape:
            raise DataError(f"dates are not co-registered: {self.t1.shape} vs {self.t2.shape}")

    @property
    def shape(self):
        return self.t1.shape


@dataclass(frozen=True)
class BinaryMask:
    """Per-pixel labels: 0 unchanged, 1 changed, 255 ignored."""
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or min(labels.shape) < 1:
            raise DataError(f"mask must be a non-empty 2-D array, got shape {labels.shape}")
        unexpected = np.setdiff1d(np.unique(labels), MASK_LABELS)
        if unexpected.size:
            raise DataError(f"mask label {unexpected[0]!r} not in {{0, 1, 255}}")
        object.__setattr__(self, "labels", _frozen(labels.astype(np.uint8, copy=True)))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self):
        return self.labels.shape

    @property
    def changed(self) -> np.ndarray:
        return self.labels == CHANGED

    @property
    def unchanged(self) -> np.ndarray:
        return self.labels == UNCHANGED

    @property
    def changed_count(self) -> int:
        return int(self.changed.sum())

    @property
    def unchanged_count(self) -> int:
        return int(self.unchanged.sum())

    @property
    def ignore_count(self) -> int:
        return int((self.labels == IGNORE).sum())

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.labels, other.labels)

    __hash__ = None


@dataclass(frozen=True)
class GrayImage:
    """Single-band image quantized to integer levels 0..255."""
    levels: np.ndarray

    def __post_init__(self):
        levels = np.asarray(self.levels)
        if levels.ndim != 2 or min(levels.shape) < 1:
            raise DataError(f"gray image must be a non-empty 2-D array, got shape {levels.shape}")
        if levels.size and (levels.min() < 0 or levels.max() > 255):
            raise DataError("gray levels must lie in [0, 255]")
        if not np.array_equal(levels, np.round(levels)):
            raise DataError("gray levels must be integers")
        object.__setattr__(self, "levels", _frozen(levels.astype(np.uint8, copy=True)))

    @property
    def height(self) -> int:
        return self.levels.shape[0]

    @property
    def width(self) -> int:
        return self.levels.shape[1]

    @property
    def shape(self):
        return self.levels.shape


@dataclass(frozen=True)
class ChangeMap:
    """Per-pixel nonnegative change score."""
    score: np.ndarray

    def __post_init__(self):
        score = np.array(self.score, dtype=np.float64, copy=True)
        if score.ndim != 2 or min(score.shape) < 1:
            raise DataError(f"change map must be a non-empty 2-D array, got shape {score.shape}")
        if not np.isfinite(score).all():
            raise DataError("change map contains non-finite scores")
        if (score < 0).any():
            raise DataError("change scores must be >= 0")
        object.__setattr__(self, "score", _frozen(score))

    @property
    def height(self) -> int:
        return self.score.shape[0]

    @property
    def width(self) -> int:
        return self.score.shape[1]

    @property
    def shape(self):
        return self.score.shape

    def __eq__(self, other):
        if not isinstance(other, ChangeMap):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.score, other.score)

    __hash__ = None
