import numpy as np
import pytest

from hsicd.models import GrayImage, HyperCube
from hsicd.schemas import SceneConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_scene() -> SceneConfig:
    return SceneConfig(height=24, width=24, bands=8, num_change_regions=2, region_size=5, seed=7)


def random_cube(rng: np.random.Generator, shape) -> HyperCube:
    return HyperCube(rng.random(shape))


def random_gray(rng: np.random.Generator, shape=(8, 8), levels=6) -> GrayImage:
    """Random image over at most `levels` distinct gray values."""
    palette = np.sort(rng.choice(256, size=levels, replace=False))
    return GrayImage(palette[rng.integers(0, levels, size=shape)].astype(np.uint8))
