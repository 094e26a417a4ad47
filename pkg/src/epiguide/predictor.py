"""Epipole-guided locally affine block prediction.

Each block's motion is described by MVs at three corners. Every depth
candidate in the :class:`~epiguide.epipolar.EpipoleTable` gives one such
triple, which the affine model spreads into one translation per 4x4
sub-block. The candidate with the lowest SSD against the target wins.

Gray frames are plain 2-D float arrays, row-major, sample (row i, col j)
sitting at pixel coordinate (x=j, y=i).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .camera import FisheyeIntrinsics
from .epipolar import (
    DepthCandidates,
    EpipoleTable,
    build_epipole_table,
    candidate_mvs,
)
from .errors import CandidateUnavailable, DomainError
from .motion import Pose
from .validation import check_frame, check_same_shape, pad_to_multiple

ZERO_MV_INDEX = -1


@dataclass(frozen=True)
class BlockSpec:
    """Square block ``(r, c)`` with top-left sample at ``(x0, y0)``."""

    r: int
    c: int
    x0: int
    y0: int
    size: int

    @classmethod
    def at(cls, r: int, c: int, size: int) -> "BlockSpec":
        return cls(r, c, c * size, r * size, size)


@dataclass(frozen=True, eq=False)
class PredictionResult:
    """Output of :func:`predict_frame`.

    Attributes
    ----------
    predicted : ndarray (H, W)
    error_image : ndarray (H, W)
        Absolute prediction error.
    depth_map : ndarray of int (rows, cols)
        Chosen depth index per block; -1 means the zero-MV candidate.
    block_mse : ndarray (rows, cols)
        MSE over the in-image samples of each block.
    frame_mse : float
    subblock_mvs : ndarray (rows, cols, n, n, 2)
        Translation applied to each sub-block of the winning candidate.
    depths : DepthCandidates
    """

    predicted: np.ndarray
    error_image: np.ndarray
    depth_map: np.ndarray
    block_mse: np.ndarray
    frame_mse: float
    subblock_mvs: np.ndarray
    depths: DepthCandidates


def mse(a, b) -> float:
    """Mean squared difference of two equally sized frames."""
    a = check_frame(a, "a")
    b = check_frame(b, "b")
    check_same_shape(a, b)
    d = a - b
    return float(np.mean(d * d))


def zero_motion_predict(ref):
    """Baseline predictor: the target is predicted as a copy of the reference."""
    return check_frame(ref, "ref").copy()


def bilinear_sample(img: np.ndarray, x, y) -> np.ndarray:
    """Sample ``img`` at continuous positions; reads past the border clamp to the edge."""
    h, w = img.shape
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0
    x0 = x0.astype(np.intp)
    y0 = y0.astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def four_param_mv2(mv0, mv1):
    """Bottom-left MV implied by the 4-parameter (rotation + zoom) model on a square block."""
    mv0 = np.asarray(mv0, dtype=np.float64)
    d = np.asarray(mv1, dtype=np.float64) - mv0
    return np.stack([mv0[..., 0] - d[..., 1], mv0[..., 1] + d[..., 0]], axis=-1)


def affine_subblock_mvs(mv0, mv1, mv2, block_size: int, subblock: int = 4) -> np.ndarray:
    """Per-sub-block translations of the 6-parameter affine model.

    The MV at block-local position (x, y) is
    ``mv0 + (mv1 - mv0) * x / S + (mv2 - mv0) * y / S``, evaluated at each
    sub-block center. Inputs may carry leading batch axes; the result has
    shape ``batch + (S // subblock, S // subblock, 2)`` indexed ``[i, j]``
    (sub-block row, sub-block column).
    """
    if subblock < 1 or block_size % subblock:
        raise DomainError(f"subblock {subblock} must divide block_size {block_size}")
    mv0 = np.asarray(mv0, dtype=np.float64)
    mv1 = np.asarray(mv1, dtype=np.float64)
    mv2 = np.asarray(mv2, dtype=np.float64)
    n = block_size // subblock
    centers = (np.arange(n) + 0.5) * subblock / block_size
    gx = (mv1 - mv0)[..., None, None, :]
    gy = (mv2 - mv0)[..., None, None, :]
    return (mv0[..., None, None, :] + gx * centers[None, :, None]
            + gy * centers[:, None, None])


def _expand_subblocks(sub: np.ndarray, subblock: int) -> np.ndarray:
    """(..., n, n, 2) sub-block MVs -> (..., S, S, 2) per-sample MVs."""
    return np.repeat(np.repeat(sub, subblock, axis=-3), subblock, axis=-2)


def predict_block(ref, block: BlockSpec, subblock_mvs) -> np.ndarray:
    """Motion-compensate one block, translating each sub-block by its own MV.

    Sub-pixel positions use bilinear interpolation.
    """
    ref = check_frame(ref, "ref")
    sub = np.asarray(subblock_mvs, dtype=np.float64)
    n = sub.shape[0]
    if sub.shape != (n, n, 2) or block.size % n:
        raise ValueError(f"subblock_mvs shape {sub.shape} does not tile a {block.size} block")
    field = _expand_subblocks(sub, block.size // n)
    xs = np.arange(block.x0, block.x0 + block.size, dtype=np.float64)
    ys = np.arange(block.y0, block.y0 + block.size, dtype=np.float64)
    return bilinear_sample(ref, xs[None, :] + field[..., 0], ys[:, None] + field[..., 1])


def translate_block(ref, block: BlockSpec, mv) -> np.ndarray:
    """Plain translational prediction of a block by a single MV."""
    ref = check_frame(ref, "ref")
    mvx, mvy = (float(v) for v in mv)
    xs = np.arange(block.x0, block.x0 + block.size, dtype=np.float64)
    ys = np.arange(block.y0, block.y0 + block.size, dtype=np.float64)
    gx = np.broadcast_to(xs[None, :], (block.size, block.size))
    gy = np.broadcast_to(ys[:, None], (block.size, block.size))
    return bilinear_sample(ref, gx + mvx, gy + mvy)


def _inside_mask(block: BlockSpec, shape) -> np.ndarray:
    h, w = shape
    rows = np.arange(block.y0, block.y0 + block.size) < h
    cols = np.arange(block.x0, block.x0 + block.size) < w
    return rows[:, None] & cols[None, :]


def _row_sums(sq_rows: np.ndarray) -> np.ndarray:
    # both the per-block and whole-frame paths reduce (k, S*S) rows here,
    # which keeps their summation order identical
    return np.sum(sq_rows, axis=-1)


def block_ssd(pred_block, target, block: BlockSpec) -> float:
    """SSD of a predicted block against the target, over in-image samples only."""
    target = check_frame(target, "target")
    padded = pad_to_multiple(target, block.size)
    if block.y0 + block.size > padded.shape[0] or block.x0 + block.size > padded.shape[1]:
        raise DomainError(f"block {block} lies outside the padded frame")
    tgt = padded[block.y0:block.y0 + block.size, block.x0:block.x0 + block.size]
    d = np.asarray(pred_block, dtype=np.float64) - tgt
    sq = np.where(_inside_mask(block, target.shape), d * d, 0.0)
    return float(_row_sums(sq.reshape(1, -1))[0])


def _candidate_order(n_depths: int, include_zero_mv: bool):
    # tie order: zero MV, then far-to-near depth; first strict minimum wins
    order = [ZERO_MV_INDEX] if include_zero_mv else []
    return order + list(range(n_depths - 1, -1, -1))


def best_depth_for_block(ref, target, block: BlockSpec, table: EpipoleTable, *,
                         include_zero_mv: bool = False, four_param: bool = False,
                         subblock: int = 4):
    """Search the depth candidates of one block.

    Returns ``(depth_index, predicted_block, ssd)``. ``depth_index`` is -1
    for the zero-MV candidate, which is also the fallback when no depth
    candidate is available. Ties go to the zero MV, then to the larger depth.
    """
    ref = check_frame(ref, "ref")
    target = check_frame(target, "target")
    check_same_shape(ref, target, ("ref", "target"))
    if block.size != table.block_size:
        raise ValueError("block size differs from the table's block size")
    n = block.size // subblock
    best = None
    for idx in _candidate_order(len(table.depths), include_zero_mv):
        if idx == ZERO_MV_INDEX:
            sub = np.zeros((n, n, 2))
        else:
            try:
                mv0, mv1, mv2 = candidate_mvs(table, block.r, block.c, idx)
            except CandidateUnavailable:
                if not four_param:
                    continue
                mv0, mv1, mv2 = _four_param_corners(table, block, idx)
                if mv0 is None:
                    continue
            if four_param:
                mv2 = four_param_mv2(mv0, mv1)
            sub = affine_subblock_mvs(mv0, mv1, mv2, block.size, subblock)
        pred = predict_block(ref, block, sub)
        ssd = block_ssd(pred, target, block)
        if best is None or ssd < best[2]:
            best = (idx, pred, ssd)
    if best is None:
        pred = predict_block(ref, block, np.zeros((n, n, 2)))
        best = (ZERO_MV_INDEX, pred, block_ssd(pred, target, block))
    return best


def _four_param_corners(table, block, idx):
    # the 4-parameter model needs only the two top corners
    r, c = block.r, block.c
    if table.valid[r, c, idx] and table.valid[r, c + 1, idx]:
        return table.mv[r, c, idx], table.mv[r, c + 1, idx], None
    return None, None, None


def _candidate_field(table: EpipoleTable, idx: int, four_param: bool, subblock: int):
    """Sub-block MVs of every block at one depth index, plus per-block availability."""
    mv = table.mv[:, :, idx]
    ok = table.valid[:, :, idx]
    mv0, mv1, mv2 = mv[:-1, :-1], mv[:-1, 1:], mv[1:, :-1]
    avail = ok[:-1, :-1] & ok[:-1, 1:]
    if four_param:
        mv2 = four_param_mv2(mv0, mv1)
    else:
        avail = avail & ok[1:, :-1]
    sub = affine_subblock_mvs(mv0, mv1, mv2, table.block_size, subblock)
    sub = np.where(avail[..., None, None, None], sub, 0.0)
    return sub, avail


def _blocks_to_frame(per_block: np.ndarray) -> np.ndarray:
    """(R, C, S, S, ...) -> (R*S, C*S, ...)."""
    R, C, S = per_block.shape[:3]
    rest = per_block.shape[4:]
    return per_block.swapaxes(1, 2).reshape((R * S, C * S) + rest)


def _frame_to_block_rows(frame: np.ndarray, S: int) -> np.ndarray:
    """(R*S, C*S) -> (R*C, S*S), one contiguous row per block."""
    H, W = frame.shape
    R, C = H // S, W // S
    return np.ascontiguousarray(frame.reshape(R, S, C, S).swapaxes(1, 2)).reshape(R * C, S * S)


def warp_with_subblocks(ref, subblock_mvs: np.ndarray, block_size: int,
                        shape=None) -> np.ndarray:
    """Predict a whole frame from per-block sub-block MVs (R, C, n, n, 2).

    ``shape`` crops the padded result; defaults to ``ref.shape``.
    """
    ref = check_frame(ref, "ref")
    sub = np.asarray(subblock_mvs, dtype=np.float64)
    n = sub.shape[2]
    field = _blocks_to_frame(_expand_subblocks(sub, block_size // n))
    Hp, Wp = field.shape[:2]
    xs = np.arange(Wp, dtype=np.float64)
    ys = np.arange(Hp, dtype=np.float64)
    pred = bilinear_sample(ref, xs[None, :] + field[..., 0], ys[:, None] + field[..., 1])
    h, w = shape if shape is not None else ref.shape
    return pred[:h, :w]


def predict_frame(ref, target, intr: FisheyeIntrinsics, relpose: Pose, *,
                  block_size: int = 16, depths=None, include_zero_mv: bool = False,
                  four_param: bool = False, subblock: int = 4,
                  table: EpipoleTable | None = None) -> PredictionResult:
    """Epipole-guided prediction of ``target`` from ``ref``.

    Builds the candidate table (unless ``table`` is given), picks the best
    depth for every block and assembles the predicted frame. Blocks are
    evaluated independently; results are written to disjoint regions so
    the output does not depend on evaluation order.
    """
    ref = check_frame(ref, "ref")
    target = check_frame(target, "target")
    check_same_shape(ref, target, ("ref", "target"))
    h, w = ref.shape
    if (intr.width, intr.height) != (w, h):
        raise ValueError(
            f"calibration is for {intr.width}x{intr.height} but frames are {w}x{h}"
        )
    if block_size % subblock:
        raise DomainError(f"subblock {subblock} must divide block_size {block_size}")
    if table is None:
        if depths is None:
            depths = DepthCandidates.inverse_uniform()
        table = build_epipole_table(intr, relpose, block_size, depths)
    elif table.block_size != block_size:
        raise ValueError("table block size differs from block_size")
    depths = table.depths

    S = block_size
    tgt = pad_to_multiple(target, S)
    Hp, Wp = tgt.shape
    R, C = Hp // S, Wp // S
    n = S // subblock
    inside = np.zeros((Hp, Wp), dtype=bool)
    inside[:h, :w] = True
    inside_rows = _frame_to_block_rows(inside, S)

    best_ssd = np.full(R * C, np.inf)
    best_idx = np.full(R * C, -2, dtype=np.intp)
    best_sub = np.zeros((R * C, n, n, 2))
    best_pred = np.zeros((R * C, S * S))

    for idx in _candidate_order(len(depths), include_zero_mv):
        if idx == ZERO_MV_INDEX:
            sub = np.zeros((R, C, n, n, 2))
            avail = np.ones((R, C), dtype=bool)
        else:
            sub, avail = _candidate_field(table, idx, four_param, subblock)
        pred = warp_with_subblocks(ref, sub, S, shape=(Hp, Wp))
        pred_rows = _frame_to_block_rows(pred, S)
        d = pred_rows - _frame_to_block_rows(tgt, S)
        ssd = _row_sums(np.where(inside_rows, d * d, 0.0))
        better = avail.reshape(-1) & (ssd < best_ssd)
        best_ssd[better] = ssd[better]
        best_idx[better] = idx
        best_sub[better] = sub.reshape(R * C, n, n, 2)[better]
        best_pred[better] = pred_rows[better]

    missing = best_idx == -2
    if np.any(missing):
        zero = _frame_to_block_rows(
            warp_with_subblocks(ref, np.zeros((R, C, n, n, 2)), S, shape=(Hp, Wp)), S)
        d = zero - _frame_to_block_rows(tgt, S)
        ssd = _row_sums(np.where(inside_rows, d * d, 0.0))
        best_ssd[missing] = ssd[missing]
        best_idx[missing] = ZERO_MV_INDEX
        best_pred[missing] = zero[missing]
        best_sub[missing] = 0.0

    predicted = _blocks_to_frame(best_pred.reshape(R, C, S, S))[:h, :w].copy()
    counts = inside_rows.sum(axis=1)
    block_mse = (best_ssd / counts).reshape(R, C)
    err = np.abs(predicted - target)
    return PredictionResult(
        predicted=predicted,
        error_image=err,
        depth_map=best_idx.reshape(R, C),
        block_mse=block_mse,
        frame_mse=mse(predicted, target),
        subblock_mvs=best_sub.reshape(R, C, n, n, 2),
        depths=depths,
    )


def mse_change_percent(zero_mse: float, guided_mse: float) -> float:
    """Relative MSE reduction of the guided predictor, in percent."""
    if zero_mse == 0:
        return 0.0
    return 100.0 * (zero_mse - guided_mse) / zero_mse


class EpipoleGuidedPredictor(BaseEstimator):
    """Estimator wrapper around :func:`predict_frame`.

    ``fit(X, y)`` takes the reference frame ``X`` and target frame ``y`` and
    learns the per-block depth choice. ``predict(X)`` applies the learned
    motion field to a reference frame.

    Parameters
    ----------
    intrinsics : FisheyeIntrinsics
    relpose : Pose
        Target camera relative to the reference camera.
    block_size : int, default=16
    depths : DepthCandidates or array-like, optional
        Defaults to 32 inverse-uniform ranges in [0.5, 200] m plus infinity.
    include_zero_mv : bool, default=False
    four_param : bool, default=False
    subblock : int, default=4

    Attributes
    ----------
    table_ : EpipoleTable
    result_ : PredictionResult
    depth_map_ : ndarray of int
    subblock_mvs_ : ndarray
    """

    def __init__(self, intrinsics=None, relpose=None, block_size=16, depths=None,
                 include_zero_mv=False, four_param=False, subblock=4):
        self.intrinsics = intrinsics
        self.relpose = relpose
        self.block_size = block_size
        self.depths = depths
        self.include_zero_mv = include_zero_mv
        self.four_param = four_param
        self.subblock = subblock

    def fit(self, X, y):
        if not isinstance(self.intrinsics, FisheyeIntrinsics):
            raise TypeError("intrinsics must be a FisheyeIntrinsics")
        relpose = self.relpose if self.relpose is not None else Pose.identity()
        depths = self.depths
        if depths is None:
            depths = DepthCandidates.inverse_uniform()
        elif not isinstance(depths, DepthCandidates):
            depths = DepthCandidates(depths)
        self.table_ = build_epipole_table(self.intrinsics, relpose, self.block_size, depths)
        self.result_ = predict_frame(
            X, y, self.intrinsics, relpose, block_size=self.block_size,
            include_zero_mv=self.include_zero_mv, four_param=self.four_param,
            subblock=self.subblock, table=self.table_,
        )
        self.depth_map_ = self.result_.depth_map
        self.subblock_mvs_ = self.result_.subblock_mvs
        self.frame_shape_ = np.shape(X)
        return self

    def predict(self, X):
        check_is_fitted(self, "subblock_mvs_")
        X = check_frame(X, "X")
        if X.shape != self.frame_shape_:
            raise ValueError(f"X has shape {X.shape}, fitted on {self.frame_shape_}")
        return warp_with_subblocks(X, self.subblock_mvs_, self.block_size)

    def score(self, X, y):
        """Negative MSE of the prediction (greater is better)."""
        return -mse(self.predict(X), y)
