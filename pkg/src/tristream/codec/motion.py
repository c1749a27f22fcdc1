"""Block-matching motion estimation, motion-compensated warp and residuals.

Motion vectors use the "where did this block move" convention: a block of the
current frame at ``p`` with vector ``v`` is predicted from the previous frame at
``p - v``. Vectors are integers in units of ``1 / subpel_scale`` pixel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._interp import predict_region, upsample
from ..errors import InputError
from ..frames import FrameBuffer

SUBPEL_SCALES = (1, 2, 4)


@dataclass(frozen=True, eq=False)
class MotionField:
    """Per-block displacement grid; ``mv[gy, gx] = (dx, dy)`` in sub-pel units."""

    mv: np.ndarray
    block_size: int = 16
    subpel_scale: int = 1

    def __post_init__(self):
        mv = np.array(self.mv, dtype=np.int32, copy=True)
        if mv.ndim != 3 or mv.shape[2] != 2:
            raise InputError(f"mv must have shape (grid_h, grid_w, 2), got {mv.shape}")
        if self.subpel_scale not in SUBPEL_SCALES:
            raise InputError(f"subpel_scale must be one of {SUBPEL_SCALES}")
        if self.block_size < 1:
            raise InputError("block_size must be positive")
        mv.flags.writeable = False
        object.__setattr__(self, "mv", mv)

    @classmethod
    def zeros(cls, grid_h, grid_w, block_size=16, subpel_scale=1):
        return cls(np.zeros((grid_h, grid_w, 2), dtype=np.int32), block_size, subpel_scale)

    @property
    def grid_h(self) -> int:
        return self.mv.shape[0]

    @property
    def grid_w(self) -> int:
        return self.mv.shape[1]

    @property
    def width(self) -> int:
        return self.grid_w * self.block_size

    @property
    def height(self) -> int:
        return self.grid_h * self.block_size

    def pixels(self) -> np.ndarray:
        """Vectors in pixel units as floats."""
        return self.mv.astype(np.float64) / self.subpel_scale

    def dense(self) -> np.ndarray:
        """Per-pixel ``(H, W, 2)`` rasterisation in pixel units."""
        b = self.block_size
        return np.repeat(np.repeat(self.pixels(), b, axis=0), b, axis=1)

    def __eq__(self, other):
        if not isinstance(other, MotionField):
            return NotImplemented
        return (self.block_size == other.block_size and self.subpel_scale == other.subpel_scale
                and self.mv.shape == other.mv.shape and bool(np.array_equal(self.mv, other.mv)))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ResidualMap:
    """Signed difference image, int16 ``(H, W, C)`` with values in [-255, 255]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.int16, copy=True)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise InputError(f"residual must be (H, W, C), got {arr.shape}")
        if arr.size and (arr.min() < -255 or arr.max() > 255):
            raise InputError("residual values must lie in [-255, 255]")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def energy(self) -> int:
        return int(np.abs(self.data.astype(np.int64)).sum())

    def __eq__(self, other):
        if not isinstance(other, ResidualMap):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


def _check_pair(prev, cur, block_size):
    if prev.shape != cur.shape:
        raise InputError(f"frame shapes differ: {prev.shape} vs {cur.shape}")
    if block_size < 1 or prev.height % block_size or prev.width % block_size:
        raise InputError(f"block size {block_size} does not divide {prev.width}x{prev.height}")


def _block_sums(absdiff, b):
    H, W, C = absdiff.shape
    return absdiff.reshape(H // b, b, W // b, b, C).sum(axis=(1, 3, 4))


def _rank_key(sad, l1, order, n):
    # SAD first, then |v|_1, then candidate scan order
    return (sad * (4 * n + 1) + l1) * n + order


def estimate_motion(prev: FrameBuffer, cur: FrameBuffer, block_size: int = 16,
                    search_range: int = 8, subpel_scale: int = 1) -> MotionField:
    """Full-search SAD block matching with optional sub-pel refinement.

    Every integer displacement with components in ``[-search_range, search_range]``
    is scored. The integer winner is then refined on successively halved sub-pel
    steps (one step for half-pel, two for quarter-pel) over its 3x3 neighbourhood
    using the same bilinear prediction as :func:`warp`.
    """
    _check_pair(prev, cur, block_size)
    if search_range < 1:
        raise InputError("search_range must be >= 1")
    if subpel_scale not in SUBPEL_SCALES:
        raise InputError(f"subpel_scale must be one of {SUBPEL_SCALES}")
    b, R, s = block_size, int(search_range), int(subpel_scale)
    p = prev.data.astype(np.int32)
    c = cur.data.astype(np.int32)
    H, W = c.shape[:2]
    padded = np.pad(p, ((R, R), (R, R), (0, 0)), mode="edge")

    offsets = [(dy, dx) for dy in range(-R, R + 1) for dx in range(-R, R + 1)]
    n = len(offsets)
    best_key = None
    best_idx = None
    for order, (dy, dx) in enumerate(offsets):
        pred = padded[R - dy:R - dy + H, R - dx:R - dx + W]
        sad = _block_sums(np.abs(c - pred), b).astype(np.int64)
        key = _rank_key(sad, abs(dx) + abs(dy), order, n)
        if best_key is None:
            best_key, best_idx = key, np.zeros(key.shape, dtype=np.int64)
        else:
            better = key < best_key
            best_key = np.where(better, key, best_key)
            best_idx = np.where(better, order, best_idx)
    off = np.array(offsets, dtype=np.int64)
    mv = np.stack([off[best_idx, 1], off[best_idx, 0]], axis=-1) * s

    if s > 1:
        limit = R * s
        margin = R + 1
        up = upsample(prev.data, s, margin).astype(np.int32)
        gh, gw = mv.shape[:2]
        for gy in range(gh):
            for gx in range(gw):
                target = c[gy * b:(gy + 1) * b, gx * b:(gx + 1) * b]
                mv[gy, gx] = _refine_block(up, target, (gy * b + margin) * s, (gx * b + margin) * s,
                                           b, mv[gy, gx], s, limit)
    return MotionField(mv, b, s)


def _refine_block(up, target, oy, ox, b, start, s, limit):
    vx, vy = int(start[0]), int(start[1])
    span = b * s
    step = s // 2
    while step >= 1:
        best = None
        order = 0
        for j in (-1, 0, 1):
            for i in (-1, 0, 1):
                cx, cy = vx + i * step, vy + j * step
                order += 1
                if abs(cx) > limit or abs(cy) > limit:
                    continue
                pred = up[oy - cy:oy - cy + span:s, ox - cx:ox - cx + span:s]
                key = (int(np.abs(target - pred).sum()), abs(cx) + abs(cy), order)
                if best is None or key < best[0]:
                    best = (key, cx, cy)
        vx, vy = best[1], best[2]
        step //= 2
    return vx, vy


def warp(prev: FrameBuffer, field: MotionField) -> FrameBuffer:
    """Motion-compensated prediction of the current frame from ``prev``."""
    if field.width != prev.width or field.height != prev.height:
        raise InputError(f"field covers {field.width}x{field.height}, frame is {prev.width}x{prev.height}")
    b, s = field.block_size, field.subpel_scale
    out = np.empty(prev.shape, dtype=np.uint8)
    for gy in range(field.grid_h):
        for gx in range(field.grid_w):
            vx, vy = field.mv[gy, gx]
            out[gy * b:(gy + 1) * b, gx * b:(gx + 1) * b] = predict_region(
                prev.data, gy * b, gx * b, b, b, int(vy), int(vx), s)
    return FrameBuffer(out)


def compute_residual(cur: FrameBuffer, warped: FrameBuffer) -> ResidualMap:
    if cur.shape != warped.shape:
        raise InputError(f"shapes differ: {cur.shape} vs {warped.shape}")
    return ResidualMap(cur.data.astype(np.int16) - warped.data.astype(np.int16))
