"""Integer bilinear sampling shared by the scene generator, motion search and warp.

Displacements are integers in sub-pel units of ``1/scale`` pixel. A sample at
output pixel ``p`` reads the source at ``p - v / scale`` with edge clamping.
All arithmetic is integer so every consumer produces the same bytes.
"""
import numpy as np


def sample(src, sy, sx, scale):
    """Sample ``src`` (uint8 ``(H, W, C)``) at sub-pel coordinates ``sy x sx``."""
    H, W = src.shape[:2]
    iy, fy = np.divmod(np.asarray(sy, dtype=np.int64), scale)
    ix, fx = np.divmod(np.asarray(sx, dtype=np.int64), scale)
    iy0 = np.clip(iy, 0, H - 1)
    iy1 = np.clip(iy + 1, 0, H - 1)
    ix0 = np.clip(ix, 0, W - 1)
    ix1 = np.clip(ix + 1, 0, W - 1)

    s = np.asarray(src, dtype=np.int64)
    if scale == 1 or (not fy.any() and not fx.any()):
        return s[iy0][:, ix0].astype(np.uint8)

    wy1 = fy[:, None, None]
    wy0 = scale - wy1
    wx1 = fx[None, :, None]
    wx0 = scale - wx1
    acc = (
        wy0 * wx0 * s[iy0][:, ix0]
        + wy0 * wx1 * s[iy0][:, ix1]
        + wy1 * wx0 * s[iy1][:, ix0]
        + wy1 * wx1 * s[iy1][:, ix1]
    )
    denom = scale * scale
    return ((acc + denom // 2) // denom).astype(np.uint8)


def predict_region(src, y0, x0, h, w, vy, vx, scale):
    """Motion-compensated prediction of the ``h x w`` region at ``(y0, x0)``."""
    sy = np.arange(y0, y0 + h, dtype=np.int64) * scale - vy
    sx = np.arange(x0, x0 + w, dtype=np.int64) * scale - vx
    return sample(src, sy, sx, scale)


def shift_frame(src, vy, vx, scale):
    """Whole-frame translation by ``(vx, vy)`` sub-pel units."""
    H, W = src.shape[:2]
    return predict_region(src, 0, 0, H, W, vy, vx, scale)


def upsample(src, scale, margin):
    """Every sub-pel sample of ``src`` padded by ``margin`` pixels on each side.

    ``up[(y + margin) * scale - vy, (x + margin) * scale - vx]`` equals
    ``predict_region`` at pixel ``(y, x)`` with vector ``(vx, vy)``.
    """
    H, W = src.shape[:2]
    sy = np.arange(-margin * scale, (H + margin) * scale, dtype=np.int64)
    sx = np.arange(-margin * scale, (W + margin) * scale, dtype=np.int64)
    return sample(src, sy, sx, scale)
