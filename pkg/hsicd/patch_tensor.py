"""
Patch-tensor Tucker denoising

A cube is cut into non-overlapping w x w patches, each patch is unfolded into a
(w*w) x bands matrix and the matrices are stacked into a 3-order tensor. The tensor is
compressed with a truncated Tucker decomposition (HOSVD start, ALS refinement),
reconstructed and put back in place; pixels outside the patch grid keep their values.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import tensorly as tl
from scipy import linalg
from tensorly.tenalg import mode_dot, multi_mode_dot

from .models import ConfigError, DataError, HyperCube
from .schemas import AlsSettings

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PatchGrid:
    patch_size: int
    patches: np.ndarray            # (m, n, w, w, bands)
    source_shape: Tuple[int, int, int]

    @property
    def m(self) -> int:
        return self.patches.shape[0]

    @property
    def n(self) -> int:
        return self.patches.shape[1]

    @property
    def bands(self) -> int:
        return self.patches.shape[4]

    @property
    def tensor_shape(self) -> Tuple[int, int, int]:
        return (self.patch_size ** 2, self.bands, self.m * self.n)


@dataclass(frozen=True)
class TuckerFactors:
    core: np.ndarray  # I1 x I2 x I3, or r x r x r for thin factors
    u: np.ndarray     # I1 x I1 (I1 x r when thin)
    v: np.ndarray     # I2 x I2
    w: np.ndarray     # I3 x I3
    rank: int
    fit_history: Tuple[float, ...] = ()  # residual norm after init and after every ALS sweep
    iterations: int = 0
    converged: bool = False

    @property
    def factors(self) -> List[np.ndarray]:
        return [self.u, self.v, self.w]

    def orthonormality_error(self) -> float:
        return max(
            float(np.abs(f.T @ f - np.eye(f.shape[1])).max()) for f in self.factors
        )


# ---------------------------------------------------------------------------
# Patch grid and tensor folding
# ---------------------------------------------------------------------------

def patchify(cube: HyperCube, w: int) -> PatchGrid:
    if w < 1 or w > min(cube.height, cube.width):
        raise DataError(f"patch size {w} must lie in [1, {min(cube.height, cube.width)}]")
    m, n = cube.height // w, cube.width // w
    covered = cube.values[:m * w, :n * w, :]
    patches = covered.reshape(m, w, n, w, cube.bands).transpose(0, 2, 1, 3, 4)
    return PatchGrid(patch_size=w, patches=patches.copy(), source_shape=cube.shape)


def fold_to_tensor(grid: PatchGrid) -> np.ndarray:
    """Slice k (row-major over patches) holds patch k as a (w*w) x bands matrix."""
    w = grid.patch_size
    stacked = grid.patches.reshape(grid.m * grid.n, w * w, grid.bands)
    return np.ascontiguousarray(stacked.transpose(1, 2, 0))


def unfold_to_grid(x: np.ndarray, grid: PatchGrid) -> PatchGrid:
    """Inverse of fold_to_tensor against the geometry of `grid`."""
    if tuple(x.shape) != grid.tensor_shape:
        raise DataError(f"tensor shape {tuple(x.shape)} does not match patch geometry {grid.tensor_shape}")
    w = grid.patch_size
    patches = np.asarray(x).transpose(2, 0, 1).reshape(grid.m, grid.n, w, w, grid.bands)
    return PatchGrid(patch_size=w, patches=patches.copy(), source_shape=grid.source_shape)


def unpatchify(x_tilde: np.ndarray, grid: PatchGrid, original: HyperCube) -> HyperCube:
    """Put reconstructed patches back; rows/cols outside the grid are copied from `original`."""
    if tuple(original.shape) != tuple(grid.source_shape):
        raise DataError(f"original cube {original.shape} does not match grid source {grid.source_shape}")
    rebuilt = unfold_to_grid(x_tilde, grid)
    w, m, n = grid.patch_size, grid.m, grid.n
    values = original.values.copy()
    values[:m * w, :n * w, :] = rebuilt.patches.transpose(0, 2, 1, 3, 4).reshape(m * w, n * w, grid.bands)
    return HyperCube(values)


# ---------------------------------------------------------------------------
# Tucker decomposition
# ---------------------------------------------------------------------------

def _orient_columns(basis: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of every column positive."""
    pivots = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[pivots, np.arange(basis.shape[1])])
    signs[signs == 0] = 1.0
    return basis * signs


def _leading_basis(unfolded: np.ndarray, r: int) -> np.ndarray:
    """Leading r left singular vectors (the top eigenvectors of the unfolding's Gram matrix)."""
    left, _, _ = linalg.svd(unfolded, full_matrices=False)
    return _orient_columns(left[:, :r])


def _complete_basis(thin: np.ndarray) -> np.ndarray:
    """Extend orthonormal columns to a square orthonormal matrix."""
    if thin.shape[1] == thin.shape[0]:
        return thin
    complement = _orient_columns(linalg.null_space(thin.T))
    return np.hstack([thin, complement])


def _truncated_core(x: np.ndarray, factors: Sequence[np.ndarray], r: int) -> np.ndarray:
    return multi_mode_dot(x, [f[:, :r] for f in factors], transpose=True)


def _residual(x: np.ndarray, factors: Sequence[np.ndarray], r: int) -> float:
    core = _truncated_core(x, factors, r)
    approx = multi_mode_dot(core, [f[:, :r] for f in factors])
    return float(np.linalg.norm(x - approx))


def tucker_als(
    x: np.ndarray,
    r: int,
    max_iters: int = 25,
    tol: float = 1e-6,
    full: bool = True,
) -> TuckerFactors:
    """
    Rank-(r, r, r) Tucker decomposition by alternating least squares.

    Factors start from the HOSVD; each sweep replaces one factor at a time by the
    leading left singular vectors of the tensor projected on the other two. Iteration
    stops when the residual changes by less than tol * ||x|| or after max_iters sweeps.

    With full=True the factors are completed to square orthonormal matrices and the
    core is the full I1 x I2 x I3 projection; with full=False only the leading r
    columns and the r x r x r core are kept.
    """
    x = tl.tensor(x, dtype=tl.float64)
    if x.ndim != 3:
        raise DataError(f"expected a 3-order tensor, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise DataError("tensor contains non-finite values")
    if not 1 <= r <= min(x.shape):
        raise ConfigError(f"rank {r} outside [1, {min(x.shape)}] for tensor {x.shape}")

    factors = [_leading_basis(tl.unfold(x, mode), r) for mode in range(3)]
    scale = float(np.linalg.norm(x))
    history = [_residual(x, factors, r)]
    iterations, converged = 0, False
    for iterations in range(1, max_iters + 1):
        for mode in range(3):
            others = [k for k in range(3) if k != mode]
            projected = multi_mode_dot(x, [factors[k][:, :r] for k in others], modes=others, transpose=True)
            factors[mode] = _leading_basis(tl.unfold(projected, mode), r)
        history.append(_residual(x, factors, r))
        if abs(history[-2] - history[-1]) <= tol * scale:
            converged = True
            break

    if full:
        factors = [_complete_basis(f) for f in factors]
    core = multi_mode_dot(x, factors, transpose=True)
    logger.debug(
        "[TUCKER] %s rank %d: residual %.3e -> %.3e after %d sweeps (converged=%s)",
        x.shape, r, history[0], history[-1], iterations, converged,
    )
    return TuckerFactors(
        core=core, u=factors[0], v=factors[1], w=factors[2], rank=r,
        fit_history=tuple(history), iterations=iterations, converged=converged,
    )


def tucker_reconstruct(f: TuckerFactors, order: Sequence[int] = (0, 1, 2)) -> np.ndarray:
    """Truncated core times truncated factors; `order` picks the mode-product sequence."""
    r = f.rank
    result = f.core[:r, :r, :r]
    for mode in order:
        result = mode_dot(result, f.factors[mode][:, :r], mode)
    return result


# ---------------------------------------------------------------------------
# Full denoising pass
# ---------------------------------------------------------------------------

def tucker_rank(grid: PatchGrid) -> int:
    return min(grid.tensor_shape)


def denoise_cube(cube: HyperCube, w: int, als: Optional[AlsSettings] = None) -> HyperCube:
    als = als or AlsSettings()
    grid = patchify(cube, w)
    x = fold_to_tensor(grid)
    r = tucker_rank(grid)
    factors = tucker_als(x, r, max_iters=als.max_iters, tol=als.tol, full=False)
    logger.info(
        "[TUCKER] w=%d tensor %s rank %d, %d sweeps, residual %.4g",
        w, x.shape, r, factors.iterations, factors.fit_history[-1],
    )
    return unpatchify(tucker_reconstruct(factors), grid, cube)
