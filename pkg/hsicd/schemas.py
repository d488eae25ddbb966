"""
Pydantic schemas for configuration, file headers and run reports
"""
import math
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .models import Attribute, BinarizePolicy, Method, TreeKind


class RasterHeader(BaseModel):
    """JSON header sitting next to a band-sequential payload"""
    model_config = ConfigDict(extra="forbid")

    height: int = Field(ge=1)
    width: int = Field(ge=1)
    bands: int = Field(ge=1)
    dtype: Literal["f32", "u8"]
    interleave: Literal["bsq"] = "bsq"
    byte_order: Literal["little"] = "little"

    @property
    def element_count(self) -> int:
        return self.height * self.width * self.bands

    @property
    def itemsize(self) -> int:
        return 4 if self.dtype == "f32" else 1


class SceneConfig(BaseModel):
    """Synthetic bi-temporal scene parameters"""
    model_config = ConfigDict(extra="forbid")

    height: int = Field(default=64, ge=1)
    width: int = Field(default=64, ge=1)
    bands: int = Field(default=20, ge=1)
    num_change_regions: int = Field(default=3, ge=0)
    change_magnitude: float = Field(default=1.0, gt=0)
    noise_sigma: float = Field(default=0.02, ge=0)
    seed: int = 0
    region_size: Optional[int] = Field(default=None, ge=1)  # side of each change square
    num_endmembers: int = Field(default=4, ge=1)

    @property
    def effective_region_size(self) -> int:
        if self.region_size is not None:
            return self.region_size
        return max(1, min(self.height, self.width) // 5)


# default threshold banks, shared by max- and min-tree profiles
AREA_THRESHOLDS = [10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0, 55.0]
CONTRAST_THRESHOLDS = [10.0, 13.0, 16.0, 19.0, 22.0, 25.0, 28.0, 31.0, 34.0, 37.0]


class ThresholdBank(BaseModel):
    """Attribute thresholds used to build the attribute profiles"""
    model_config = ConfigDict(extra="forbid")

    area: List[float] = Field(default_factory=lambda: list(AREA_THRESHOLDS))
    height: List[float] = Field(default_factory=lambda: list(CONTRAST_THRESHOLDS))
    volume: List[float] = Field(default_factory=lambda: list(CONTRAST_THRESHOLDS))
    diag: List[float] = Field(default_factory=lambda: list(CONTRAST_THRESHOLDS))
    std: List[float] = Field(default_factory=lambda: list(CONTRAST_THRESHOLDS))

    @field_validator("area", "height", "volume", "diag", "std")
    @classmethod
    def _non_empty_sorted(cls, values: List[float]) -> List[float]:
        if not values:
            raise ValueError("threshold list must not be empty")
        if not all(math.isfinite(v) for v in values):
            raise ValueError("thresholds must be finite")
        return sorted(values)

    def for_attribute(self, attribute: Attribute) -> List[float]:
        return getattr(self, Attribute(attribute).value)

    def bands(self, kinds=(TreeKind.MAX, TreeKind.MIN)) -> List[Tuple[TreeKind, Attribute, float]]:
        """Provenance of every feature band in stacking order."""
        return [
            (kind, attribute, threshold)
            for kind in kinds
            for attribute in Attribute
            for threshold in self.for_attribute(attribute)
        ]


class FusionWeights(BaseModel):
    model_config = ConfigDict(extra="forbid")

    a: float = Field(default=0.5, ge=0)
    b: float = Field(default=0.5, ge=0)

    @model_validator(mode="after")
    def _positive_total(self):
        if self.a + self.b <= 0:
            raise ValueError("fusion weights must satisfy a + b > 0")
        return self


class AlsSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    max_iters: int = Field(default=25, ge=1)
    tol: float = Field(default=1e-6, ge=0)


class SweepSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    w_min: int = Field(default=3, ge=1)
    w_max: int = Field(default=15, ge=1)

    @model_validator(mode="after")
    def _ordered(self):
        if self.w_min > self.w_max:
            raise ValueError(f"w_min ({self.w_min}) must not exceed w_max ({self.w_max})")
        return self

    @property
    def patch_sizes(self) -> List[int]:
        return list(range(self.w_min, self.w_max + 1))


class BinarizeSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    policy: BinarizePolicy = BinarizePolicy.PERCENTILE
    q: float = Field(default=95.0, ge=0, le=100)


class PipelineConfig(BaseModel):
    """Everything a detection or sweep run depends on"""
    model_config = ConfigDict(extra="forbid")

    method: Method = Method.JMPT
    patch_size: int = Field(default=3, ge=1)
    connectivity: Literal[4, 8] = 4
    thresholds: ThresholdBank = Field(default_factory=ThresholdBank)
    fusion: FusionWeights = Field(default_factory=FusionWeights)
    als: AlsSettings = Field(default_factory=AlsSettings)
    scene: SceneConfig = Field(default_factory=SceneConfig)
    sweep: SweepSettings = Field(default_factory=SweepSettings)
    binarize: BinarizeSettings = Field(default_factory=BinarizeSettings)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

class SynthSummary(BaseModel):
    height: int
    width: int
    bands: int
    changed_pixels: int
    seed: int
    files: Dict[str, str]


class RunReport(BaseModel):
    method: Method
    height: int
    width: int
    bands: int
    score_min: float
    score_max: float
    wall_time_s: float
    inputs: Dict[str, str]
    outputs: Dict[str, str]
    config: PipelineConfig


class ClassBox(BaseModel):
    """Percentiles 0/20/50/80/100 of one class's scores"""
    p0: float
    p20: float
    p50: float
    p80: float
    p100: float


class SeparabilityStats(BaseModel):
    changed: ClassBox
    unchanged: ClassBox

    @property
    def gap(self) -> float:
        """Distance between the lower edge of the changed box and the upper edge of the unchanged box."""
        return self.changed.p20 - self.unchanged.p80


class EvalReport(BaseModel):
    auc: float
    separability: SeparabilityStats
    changed_pixels: int
    unchanged_pixels: int
    roc_points: int


class SweepRow(BaseModel):
    w: int
    auc: float
