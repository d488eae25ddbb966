"""
Raster I/O for hyperspectral cubes, masks and change maps, plus the synthetic scene generator

On-disk format: `<name>.json` header + `<name>.bin` band-sequential little-endian payload,
element (r, c, b) at index b*H*W + r*W + c.
"""
import json
import logging
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from PIL import Image
from pydantic import ValidationError

from .models import (
    CHANGED,
    IGNORE,
    BinaryMask,
    BiTemporalPair,
    ChangeMap,
    DataError,
    HyperCube,
)
from .schemas import RasterHeader, SceneConfig

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_NUMPY_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}

# Attempts at placing one change rectangle before giving up
MAX_PLACEMENT_ATTEMPTS = 1000


def raster_paths(path: PathLike) -> Tuple[Path, Path]:
    """Resolve `<name>`, `<name>.json` or `<name>.bin` into (header, payload) paths."""
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".json", ".bin") else path
    return Path(f"{stem}.json"), Path(f"{stem}.bin")


# ---------------------------------------------------------------------------
# Low-level raster read/write
# ---------------------------------------------------------------------------

def _read_header(header_path: Path) -> RasterHeader:
    try:
        raw = header_path.read_text()
    except OSError as e:
        raise DataError(f"missing header {header_path}: {e}") from e
    try:
        return RasterHeader.model_validate(json.loads(raw))
    except (json.JSONDecodeError, ValidationError) as e:
        raise DataError(f"unparsable header {header_path}: {e}") from e


def _read_raster(path: PathLike, dtype: str) -> Tuple[RasterHeader, np.ndarray]:
    """Read a raster and return it as a (rows, cols, bands) array of the storage dtype."""
    header_path, payload_path = raster_paths(path)
    header = _read_header(header_path)
    if header.dtype != dtype:
        raise DataError(f"{header_path} holds dtype {header.dtype!r}, expected {dtype!r}")
    try:
        payload = payload_path.read_bytes()
    except OSError as e:
        raise DataError(f"missing payload {payload_path}: {e}") from e
    expected = header.element_count * header.itemsize
    if len(payload) != expected:
        raise DataError(
            f"payload size mismatch for {payload_path}: expected {expected} bytes "
            f"({header.height}x{header.width}x{header.bands}), found {len(payload)}"
        )
    flat = np.frombuffer(payload, dtype=_NUMPY_DTYPES[dtype])
    if dtype == "f32":
        bad = np.flatnonzero(~np.isfinite(flat))
        if bad.size:
            b, rest = divmod(int(bad[0]), header.height * header.width)
            r, c = divmod(rest, header.width)
            raise DataError(
                f"non-finite value in {payload_path} at element {int(bad[0])} "
                f"(row={r}, col={c}, band={b})"
            )
    bsq = flat.reshape(header.bands, header.height, header.width)
    logger.debug("[IO] read %s (%dx%dx%d %s)", payload_path, header.height, header.width, header.bands, dtype)
    return header, np.transpose(bsq, (1, 2, 0))


def _write_raster(values: np.ndarray, path: PathLike, dtype: str) -> None:
    """Write a (rows, cols, bands) array in the repo raster format."""
    header_path, payload_path = raster_paths(path)
    rows, cols, bands = values.shape
    header = RasterHeader(height=rows, width=cols, bands=bands, dtype=dtype)
    payload = np.ascontiguousarray(np.transpose(values, (2, 0, 1))).astype(_NUMPY_DTYPES[dtype])
    try:
        header_path.parent.mkdir(parents=True, exist_ok=True)
        header_path.write_text(header.model_dump_json())
        payload_path.write_bytes(payload.tobytes())
    except OSError as e:
        raise DataError(f"cannot write raster {header_path}: {e}") from e
    logger.debug("[IO] wrote %s (%dx%dx%d %s)", payload_path, rows, cols, bands, dtype)


# ---------------------------------------------------------------------------
# Cubes, masks and change maps
# ---------------------------------------------------------------------------

def load_cube(path: PathLike) -> HyperCube:
    _, values = _read_raster(path, "f32")
    return HyperCube(values)


def save_cube(cube: HyperCube, path: PathLike) -> None:
    _write_raster(cube.values, path, "f32")


def load_mask(path: PathLike) -> BinaryMask:
    header, values = _read_raster(path, "u8")
    if header.bands != 1:
        raise DataError(f"mask must have exactly 1 band, found {header.bands}")
    return BinaryMask(values[:, :, 0])


def save_mask(mask: BinaryMask, path: PathLike) -> None:
    _write_raster(mask.labels[:, :, np.newaxis], path, "u8")


def load_change_map(path: PathLike) -> ChangeMap:
    header, values = _read_raster(path, "f32")
    if header.bands != 1:
        raise DataError(f"change map must have exactly 1 band, found {header.bands}")
    return ChangeMap(values[:, :, 0])


def save_change_map(change_map: ChangeMap, path: PathLike) -> None:
    _write_raster(change_map.score[:, :, np.newaxis], path, "f32")


def save_quicklook_png(image: Union[ChangeMap, BinaryMask], path: PathLike) -> None:
    """Write an 8-bit grayscale preview; ignored mask pixels render mid-gray."""
    if isinstance(image, BinaryMask):
        pixels = np.zeros(image.shape, dtype=np.uint8)
        pixels[image.labels == CHANGED] = 255
        pixels[image.labels == IGNORE] = 128
    else:
        score = image.score
        span = score.max() - score.min()
        scaled = (score - score.min()) / span if span > 0 else np.zeros_like(score)
        pixels = np.round(scaled * 255).astype(np.uint8)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(pixels).save(path)
    except OSError as e:
        raise DataError(f"cannot write preview {path}: {e}") from e


# ---------------------------------------------------------------------------
# Synthetic scenes
# ---------------------------------------------------------------------------

def _smooth_spectrum(rng: np.random.Generator, wavelengths: np.ndarray) -> np.ndarray:
    """Sum of three Gaussian absorption-like bumps rescaled into [0.1, 0.9]."""
    centers = rng.uniform(0.0, 1.0, 3)
    widths = rng.uniform(0.08, 0.3, 3)
    amplitudes = rng.uniform(0.3, 1.0, 3)
    bumps = amplitudes * np.exp(-0.5 * ((wavelengths[:, None] - centers) / widths) ** 2)
    spectrum = bumps.sum(axis=1)
    return 0.1 + 0.8 * spectrum / spectrum.max()


def _background_labels(rng: np.random.Generator, config: SceneConfig) -> np.ndarray:
    """Voronoi partition of the image; each cell gets one endmember."""
    n_seeds = 2 * config.num_endmembers
    seeds = np.column_stack([
        rng.uniform(0, config.height, n_seeds),
        rng.uniform(0, config.width, n_seeds),
    ])
    rows, cols = np.mgrid[0:config.height, 0:config.width]
    distances = (rows[..., None] - seeds[:, 0]) ** 2 + (cols[..., None] - seeds[:, 1]) ** 2
    return np.argmin(distances, axis=-1) % config.num_endmembers


def _place_rectangles(rng: np.random.Generator, config: SceneConfig):
    size = config.effective_region_size
    if config.num_change_regions and (size > config.height or size > config.width):
        raise DataError(
            f"change region of side {size} cannot fit in a {config.height}x{config.width} image"
        )
    occupied = np.zeros((config.height, config.width), dtype=bool)
    rectangles = []
    for index in range(config.num_change_regions):
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            r = int(rng.integers(0, config.height - size + 1))
            c = int(rng.integers(0, config.width - size + 1))
            if not occupied[r:r + size, c:c + size].any():
                occupied[r:r + size, c:c + size] = True
                rectangles.append((r, c, size, size))
                break
        else:
            raise DataError(
                f"could not place change region {index + 1} of {config.num_change_regions} "
                f"(side {size}) without overlap in a {config.height}x{config.width} image"
            )
    return rectangles


def synth_pair(config: SceneConfig) -> Tuple[BiTemporalPair, BinaryMask]:
    """
    Generate a co-registered pair with planted rectangular changes.
    Background endmembers fill Voronoi cells; every change rectangle at t2 is replaced by
    a dedicated change endmember scaled by change_magnitude. Deterministic per seed.
    """
    rng = np.random.default_rng(config.seed)
    wavelengths = np.linspace(0.0, 1.0, config.bands)
    n_change = max(1, config.num_change_regions)
    endmembers = np.stack([
        _smooth_spectrum(rng, wavelengths) for _ in range(config.num_endmembers + n_change)
    ])
    background, change_spectra = endmembers[:config.num_endmembers], endmembers[config.num_endmembers:]

    t1 = background[_background_labels(rng, config)]
    t2 = t1.copy()
    labels = np.zeros((config.height, config.width), dtype=np.uint8)
    for index, (r, c, h, w) in enumerate(_place_rectangles(rng, config)):
        t2[r:r + h, c:c + w, :] = config.change_magnitude * change_spectra[index % n_change]
        labels[r:r + h, c:c + w] = CHANGED

    if config.noise_sigma > 0:
        t1 = t1 + rng.normal(0.0, config.noise_sigma, t1.shape)
        t2 = t2 + rng.normal(0.0, config.noise_sigma, t2.shape)

    mask = BinaryMask(labels)
    logger.info(
        "[SYNTH] %dx%dx%d scene, %d change regions, %d changed pixels, seed=%d",
        config.height, config.width, config.bands, config.num_change_regions,
        mask.changed_count, config.seed,
    )
    return BiTemporalPair(HyperCube(t1), HyperCube(t2)), mask
