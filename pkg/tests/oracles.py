"""Slow, obviously-correct reference implementations used only by the tests.

They share no code with the package: loops over pixels and candidates,
exact rational arithmetic for sub-pixel samples, and textbook formulas.
"""
from fractions import Fraction
from math import exp, log, sqrt
from statistics import NormalDist

import numpy as np


def clamp(v, lo, hi):
    return max(lo, min(hi, v))


def bilinear_pixel(img, y, x):
    """Sample at rational (y, x) with edge clamp; rounds half up."""
    H, W = img.shape[:2]
    iy, ix = int(np.floor(y)), int(np.floor(x))
    fy, fx = Fraction(y) - iy, Fraction(x) - ix
    out = []
    for c in range(img.shape[2]):
        acc = Fraction(0)
        for dy, wy in ((0, 1 - fy), (1, fy)):
            for dx, wx in ((0, 1 - fx), (1, fx)):
                if wy and wx:
                    acc += wy * wx * int(img[clamp(iy + dy, 0, H - 1), clamp(ix + dx, 0, W - 1), c])
        out.append(int(np.floor(acc + Fraction(1, 2))))
    return out


def predict_block(prev, y0, x0, b, vx, vy, scale):
    """Prediction of block (y0, x0) under vector (vx, vy) in 1/scale pixel units."""
    C = prev.shape[2]
    out = np.zeros((b, b, C), dtype=np.int64)
    for y in range(b):
        for x in range(b):
            sy = Fraction(y0 + y) - Fraction(vy, scale)
            sx = Fraction(x0 + x) - Fraction(vx, scale)
            out[y, x] = bilinear_pixel(prev, sy, sx)
    return out


def block_sad(prev, cur, y0, x0, b, vx, vy, scale=1):
    target = cur[y0:y0 + b, x0:x0 + b].astype(np.int64)
    if scale == 1:
        H, W = prev.shape[:2]
        ys = [clamp(y0 + y - vy, 0, H - 1) for y in range(b)]
        xs = [clamp(x0 + x - vx, 0, W - 1) for x in range(b)]
        pred = prev[np.ix_(ys, xs)].astype(np.int64)
    else:
        pred = predict_block(prev, y0, x0, b, vx, vy, scale)
    return int(np.abs(target - pred).sum())


def exhaustive_block(prev, cur, y0, x0, b, R):
    """Best integer vector by (SAD, |v|_1, row-major scan order)."""
    best = None
    for dy in range(-R, R + 1):
        for dx in range(-R, R + 1):
            key = (block_sad(prev, cur, y0, x0, b, dx, dy), abs(dx) + abs(dy))
            if best is None or key < best[0]:
                best = (key, (dx, dy))
    return best[1]


def exhaustive_field(prev, cur, b, R):
    H, W = cur.shape[:2]
    return np.array([[exhaustive_block(prev, cur, gy * b, gx * b, b, R) for gx in range(W // b)]
                     for gy in range(H // b)])


def min_sad_over_grid(prev, cur, y0, x0, b, R, scale):
    """Minimum SAD over every sub-pel vector in the window (no search shortcuts)."""
    best = None
    for vy in range(-R * scale, R * scale + 1):
        for vx in range(-R * scale, R * scale + 1):
            s = block_sad(prev, cur, y0, x0, b, vx, vy, scale)
            best = s if best is None else min(best, s)
    return best


def wilson(correct, total, confidence=0.95):
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    p = correct / total
    d = 1 + z * z / total
    c = (p + z * z / (2 * total)) / d
    m = z * sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / d
    return max(0.0, c - m), min(1.0, c + m)


def infonce(M, V, tau):
    """Symmetric InfoNCE by explicit loops over rows."""
    B = len(M)
    cos = [[float(np.dot(m, v) / (np.linalg.norm(m) * np.linalg.norm(v))) for v in V] for m in M]
    total = 0.0
    for k in range(B):
        row = sum(exp(cos[k][j] / tau) for j in range(B))
        col = sum(exp(cos[j][k] / tau) for j in range(B))
        total += -log(exp(cos[k][k] / tau) / row) - log(exp(cos[k][k] / tau) / col)
    return total / (2 * B)


def naive_inject(E, positions, M):
    out = [list(r) for r in E]
    for j, p in enumerate(positions):
        out[p] = list(M[j])
    return np.array(out, dtype=np.float64).reshape(np.shape(E))


def onehot_inject(E, positions, M):
    """Dense-selector form: E' = (I - diag(P 1)) E + P M."""
    S = len(E)
    P = np.zeros((S, len(positions)))
    for j, p in enumerate(positions):
        P[p, j] = 1.0
    keep = np.eye(S) - np.diag(P.sum(axis=1))
    return keep @ np.asarray(E) + (P @ np.asarray(M) if len(positions) else 0.0)
