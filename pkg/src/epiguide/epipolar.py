"""Epipolar curves and the per-corner candidate motion-vector table.

For a target-frame pixel, every hypothesised range ``d`` along its ray gives
a 3-D point; moving that point into the reference camera and projecting it
traces a 1-D curve in the reference image. Sampling the curve at the block
corners of the target frame gives ``mv[row, col, depth]``, the displacement
from each corner to its reference-frame correspondence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .camera import FisheyeIntrinsics, project, unproject, unproject_masked
from .errors import CandidateUnavailable, DomainError
from .motion import Pose

DEFAULT_DEPTH_COUNT = 32
DEFAULT_NEAR = 0.5
DEFAULT_FAR = 200.0


@dataclass(frozen=True, eq=False)
class DepthCandidates:
    """Strictly increasing positive ranges (meters); ``inf`` is allowed last."""

    d: np.ndarray

    def __post_init__(self):
        d = np.array(self.d, dtype=np.float64).reshape(-1)
        if d.size == 0:
            raise DomainError("at least one depth candidate is required")
        if np.any(np.isnan(d)) or np.any(d <= 0):
            raise DomainError("depth candidates must be positive")
        if np.any(np.diff(d) <= 0):
            raise DomainError("depth candidates must be strictly increasing")
        d.flags.writeable = False
        object.__setattr__(self, "d", d)

    def __len__(self):
        return self.d.size

    @classmethod
    def inverse_uniform(cls, count: int = DEFAULT_DEPTH_COUNT, near: float = DEFAULT_NEAR,
                        far: float = DEFAULT_FAR, include_infinity: bool = True,
                        extra=()) -> "DepthCandidates":
        """``count`` ranges evenly spaced in inverse depth over [near, far].

        ``extra`` values are merged in (duplicates dropped); an infinite
        candidate is appended when ``include_infinity``.
        """
        if count < 1:
            raise DomainError("count must be >= 1")
        if not 0 < near <= far or not math.isfinite(far):
            raise DomainError("need 0 < near <= far < inf")
        if count == 1:
            d = np.array([near])
        else:
            d = 1.0 / np.linspace(1.0 / near, 1.0 / far, count)
        d = np.concatenate([d, np.asarray(extra, dtype=np.float64)])
        if include_infinity:
            d = np.concatenate([d, [np.inf]])
        return cls(np.unique(d))

    def to_list(self):
        return [None if math.isinf(v) else float(v) for v in self.d]


def _transform_rays(relpose: Pose, rays: np.ndarray, depths: np.ndarray) -> np.ndarray:
    """Reference-frame points (or directions, for infinite depth) of rays at each depth.

    ``rays`` is (..., 3); result is (..., n_depths, 3).
    """
    # elementwise rather than matmul: BLAS kernels vary with batch shape, and
    # table entries must equal single-pixel curve evaluations bit for bit
    R = relpose.R
    rotated = rays[..., 0:1] * R[:, 0] + rays[..., 1:2] * R[:, 1] + rays[..., 2:3] * R[:, 2]
    out = np.empty(rays.shape[:-1] + (depths.size, 3))
    for i, d in enumerate(depths):
        if math.isinf(d):
            out[..., i, :] = rotated
        else:
            out[..., i, :] = d * rotated + relpose.t
    return out


def _curve_points(intr: FisheyeIntrinsics, relpose: Pose, rays: np.ndarray,
                  depths: np.ndarray):
    pts = _transform_rays(relpose, rays, depths)
    norm = np.sqrt(pts[..., 0:1] ** 2 + pts[..., 1:2] ** 2 + pts[..., 2:3] ** 2)
    degenerate = norm[..., 0] <= 1e-12
    dirs = pts / np.where(degenerate[..., None], 1.0, norm)
    px, valid = project(intr, dirs)
    return px, valid & ~degenerate


def epipole_curve(intr: FisheyeIntrinsics, relpose: Pose, px_target, depths):
    """Reference-frame image of a target pixel at each candidate depth.

    Returns ``(points, valid)`` with shapes (n, 2) and (n,). A point is
    invalid when it falls outside the lens field of view (or coincides with
    the reference camera center).
    """
    depths = depths if isinstance(depths, DepthCandidates) else DepthCandidates(depths)
    px = np.asarray(px_target, dtype=np.float64).reshape(2)
    ray = unproject(intr, px)
    pts, valid = _curve_points(intr, relpose, ray, depths.d)
    return _pin_identity(relpose, pts, px), valid


def _pin_identity(relpose: Pose, pts, source):
    # without motion every ray maps onto itself; skip the round-trip error
    if relpose.is_identity():
        return np.broadcast_to(source[..., None, :], pts.shape).copy()
    return pts


@dataclass(frozen=True, eq=False)
class EpipoleTable:
    """Candidate MVs on the block-corner grid.

    ``mv[row, col, i]`` is the (dx, dy) displacement in pixels from corner
    ``(col * block_size, row * block_size)`` to its reference-frame image at
    depth ``depths.d[i]``. ``valid`` has shape ``mv.shape[:3]``.
    """

    block_size: int
    depths: DepthCandidates
    mv: np.ndarray
    valid: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def grid_rows(self) -> int:
        return self.mv.shape[0]

    @property
    def grid_cols(self) -> int:
        return self.mv.shape[1]

    @property
    def shape(self):
        return self.mv.shape[:3]

    def corner(self, row: int, col: int):
        return (col * self.block_size, row * self.block_size)


def corner_grid(width: int, height: int, block_size: int) -> np.ndarray:
    """Pixel positions (x, y) of block corners, shape (rows, cols, 2).

    The image is padded up to a multiple of ``block_size``, and one extra
    row/column of corners closes the last blocks.
    """
    rows = -(-height // block_size) + 1
    cols = -(-width // block_size) + 1
    ys, xs = np.mgrid[0:rows, 0:cols]
    return np.stack([xs * block_size, ys * block_size], axis=-1).astype(np.float64)


def build_epipole_table(intr: FisheyeIntrinsics, relpose: Pose, block_size: int,
                        depths) -> EpipoleTable:
    """Precompute ``mv[row][col][depth]`` for every block corner.

    Corners outside the image circle, or whose correspondence leaves the
    field of view, are marked invalid and hold NaN.
    """
    if block_size < 1:
        raise DomainError("block_size must be positive")
    depths = depths if isinstance(depths, DepthCandidates) else DepthCandidates(depths)
    corners = corner_grid(intr.width, intr.height, block_size)
    rays, in_lens = unproject_masked(intr, corners)
    safe_rays = np.where(in_lens[..., None], rays, np.array([0.0, 0.0, 1.0]))
    px, valid = _curve_points(intr, relpose, safe_rays, depths.d)
    px = _pin_identity(relpose, px, corners)
    valid &= in_lens[..., None]
    mv = px - corners[:, :, None, :]
    mv[~valid] = np.nan
    mv.flags.writeable = False
    valid.flags.writeable = False
    return EpipoleTable(block_size, depths, mv, valid,
                        {"depths": depths.to_list(), "block_size": block_size})


def candidate_mvs(table: EpipoleTable, row: int, column: int, depth_index: int):
    """Control-point MVs (top-left, top-right, bottom-left) of a block at one depth.

    Raises :class:`CandidateUnavailable` if any of the three corners is invalid.
    """
    if not (0 <= row < table.grid_rows - 1 and 0 <= column < table.grid_cols - 1):
        raise IndexError(f"block ({row}, {column}) outside the table")
    if not 0 <= depth_index < len(table.depths):
        raise IndexError(f"depth index {depth_index} out of range")
    corners = ((row, column), (row, column + 1), (row + 1, column))
    if not all(table.valid[r, c, depth_index] for r, c in corners):
        raise CandidateUnavailable(f"block ({row}, {column}) has an invalid corner at depth "
                                   f"index {depth_index}")
    return tuple(table.mv[r, c, depth_index].copy() for r, c in corners)
