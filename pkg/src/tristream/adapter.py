"""Branch encoders and staged gated fusion of the three codec streams.

Each branch is patchify + linear + mean-pool, so ``encode_branch`` is affine in
its input and reduces to ``proj @ mean_patch + bias``. Fusion combines MV and
residual codes through one sigmoid gate, then mixes the result with the
I-frame code through a second gate with its own parameters.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .codec.motion import MotionField, ResidualMap
from .errors import InputError
from .frames import FrameBuffer


class FusionMode(str, Enum):
    CONCAT = "concat"
    WEIGHTED_SUM = "weighted_sum"
    CONCAT_MLP = "concat_mlp"
    GATED = "gated"


@dataclass(frozen=True, eq=False)
class BranchParams:
    patch: int
    in_channels: int
    proj: np.ndarray  # (d, patch * patch * in_channels)
    bias: np.ndarray  # (d,)

    def __post_init__(self):
        proj = np.asarray(self.proj, dtype=np.float64)
        bias = np.asarray(self.bias, dtype=np.float64)
        if proj.ndim != 2 or proj.shape[1] != self.patch * self.patch * self.in_channels:
            raise InputError(f"proj must be (d, {self.patch * self.patch * self.in_channels}), got {proj.shape}")
        if bias.shape != (proj.shape[0],):
            raise InputError(f"bias must be ({proj.shape[0]},), got {bias.shape}")
        if not (np.isfinite(proj).all() and np.isfinite(bias).all()):
            raise InputError("branch parameters must be finite")
        object.__setattr__(self, "proj", proj)
        object.__setattr__(self, "bias", bias)

    @property
    def d(self) -> int:
        return self.proj.shape[0]


@dataclass(frozen=True, eq=False)
class GateParams:
    W: np.ndarray  # (d, 2d)
    b: np.ndarray  # (d,)

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if W.ndim != 2 or W.shape[1] != 2 * W.shape[0] or b.shape != (W.shape[0],):
            raise InputError(f"gate needs W (d, 2d) and b (d,), got {W.shape} and {b.shape}")
        if not (np.isfinite(W).all() and np.isfinite(b).all()):
            raise InputError("gate parameters must be finite")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @classmethod
    def zeros(cls, d):
        return cls(np.zeros((d, 2 * d)), np.zeros(d))


@dataclass(frozen=True, eq=False)
class FusedEmbedding:
    h_fused: np.ndarray
    g_mr: np.ndarray | None
    g_tri: np.ndarray

    def weights(self) -> tuple[float, float, float]:
        """Effective (mv, res, ifr) mixing weights averaged over dimensions."""
        g_mr, g_tri = self.g_mr, self.g_tri
        return (float(np.mean(g_tri * g_mr)), float(np.mean(g_tri * (1 - g_mr))),
                float(np.mean(1 - g_tri)))


@dataclass(frozen=True, eq=False)
class FusionParams:
    """Per-mode parameters; only the fields of the selected mode are required."""

    gate_mr: GateParams | None = None
    gate_tri: GateParams | None = None
    concat_proj: np.ndarray | None = None  # (d, 3d)
    concat_bias: np.ndarray | None = None
    logits: np.ndarray | None = None  # (3,)
    mlp_w1: np.ndarray | None = None  # (hidden, 3d)
    mlp_b1: np.ndarray | None = None
    mlp_w2: np.ndarray | None = None  # (d, hidden)
    mlp_b2: np.ndarray | None = None


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def to_branch_array(obj) -> np.ndarray:
    """Float ``(H, W, C)`` view of a codec map.

    Motion fields become per-block vectors in pixels; residuals and frames are
    scaled by 1/255. Plain arrays pass through unchanged.
    """
    if isinstance(obj, MotionField):
        return obj.pixels()
    if isinstance(obj, ResidualMap):
        return obj.data.astype(np.float64) / 255.0
    if isinstance(obj, FrameBuffer):
        return obj.data.astype(np.float64) / 255.0
    arr = np.asarray(obj, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def mean_patch(arr, patch: int) -> np.ndarray:
    """Average of all non-overlapping ``patch x patch`` tiles, flattened row-major."""
    arr = to_branch_array(arr)
    H, W, C = arr.shape
    if patch < 1 or H % patch or W % patch:
        raise InputError(f"patch {patch} does not divide map size {W}x{H}")
    tiles = arr.reshape(H // patch, patch, W // patch, patch, C)
    return tiles.mean(axis=(0, 2)).reshape(-1)


def encode_branch(arr, params: BranchParams) -> np.ndarray:
    arr = to_branch_array(arr)
    if arr.shape[2] != params.in_channels:
        raise InputError(f"branch expects {params.in_channels} channels, map has {arr.shape[2]}")
    return params.proj @ mean_patch(arr, params.patch) + params.bias


def _gate(a, b, gate: GateParams):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != (gate.d,) or b.shape != (gate.d,):
        raise InputError(f"gate of width {gate.d} got inputs {a.shape} and {b.shape}")
    g = sigmoid(gate.W @ np.concatenate([a, b]) + gate.b)
    return g * a + (1.0 - g) * b, g


def fuse_mr(h_mv, h_res, gate: GateParams):
    """Gate MV against residual; returns ``(h_mr, g_mr)``."""
    return _gate(h_mv, h_res, gate)


def fuse_tri(h_mr, h_ifr, gate: GateParams, g_mr=None) -> FusedEmbedding:
    h, g = _gate(h_mr, h_ifr, gate)
    return FusedEmbedding(h, None if g_mr is None else np.asarray(g_mr), g)


def fuse_gated(h_mv, h_res, h_ifr, gate_mr: GateParams, gate_tri: GateParams) -> FusedEmbedding:
    h_mr, g_mr = fuse_mr(h_mv, h_res, gate_mr)
    return fuse_tri(h_mr, h_ifr, gate_tri, g_mr)


def _need(params, *names):
    missing = [n for n in names if getattr(params, n) is None]
    if missing:
        raise InputError(f"fusion parameters missing: {', '.join(missing)}")


def fuse_variant(mode, h_mv, h_res, h_ifr, params: FusionParams) -> np.ndarray:
    mode = FusionMode(mode)
    if mode is FusionMode.GATED:
        _need(params, "gate_mr", "gate_tri")
        return fuse_gated(h_mv, h_res, h_ifr, params.gate_mr, params.gate_tri).h_fused
    stacked = np.concatenate([h_mv, h_res, h_ifr]).astype(np.float64)
    if mode is FusionMode.CONCAT:
        _need(params, "concat_proj")
        out = params.concat_proj @ stacked
        return out if params.concat_bias is None else out + params.concat_bias
    if mode is FusionMode.WEIGHTED_SUM:
        _need(params, "logits")
        z = np.asarray(params.logits, dtype=np.float64)
        w = np.exp(z - z.max())
        w /= w.sum()
        return w[0] * np.asarray(h_mv) + w[1] * np.asarray(h_res) + w[2] * np.asarray(h_ifr)
    _need(params, "mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2")
    hidden = np.tanh(params.mlp_w1 @ stacked + params.mlp_b1)
    return params.mlp_w2 @ hidden + params.mlp_b2


def init_branch(rng, patch, in_channels, d, scale=1.0) -> BranchParams:
    fan_in = patch * patch * in_channels
    return BranchParams(patch, in_channels, rng.normal(0, scale / np.sqrt(fan_in), (d, fan_in)), np.zeros(d))


def init_fusion(mode, d, rng, hidden=None) -> FusionParams:
    mode = FusionMode(mode)
    if mode is FusionMode.GATED:
        return FusionParams(gate_mr=GateParams(rng.normal(0, 0.01, (d, 2 * d)), np.zeros(d)),
                            gate_tri=GateParams(rng.normal(0, 0.01, (d, 2 * d)), np.zeros(d)))
    if mode is FusionMode.CONCAT:
        return FusionParams(concat_proj=rng.normal(0, 1 / np.sqrt(3 * d), (d, 3 * d)), concat_bias=np.zeros(d))
    if mode is FusionMode.WEIGHTED_SUM:
        return FusionParams(logits=np.zeros(3))
    hidden = hidden or d
    return FusionParams(mlp_w1=rng.normal(0, 1 / np.sqrt(3 * d), (hidden, 3 * d)), mlp_b1=np.zeros(hidden),
                        mlp_w2=rng.normal(0, 1 / np.sqrt(hidden), (d, hidden)), mlp_b2=np.zeros(d))


@dataclass(frozen=True)
class GateRow:
    label: str
    w_mv: float
    w_res: float
    w_ifr: float
    n: int

    def as_dict(self) -> dict:
        return {"label": self.label, "w_mv": self.w_mv, "w_res": self.w_res, "w_ifr": self.w_ifr, "n": self.n}


def gate_report(samples) -> list[GateRow]:
    """Mean effective branch weights per label, in first-seen label order."""
    samples = list(samples)
    if not samples:
        raise InputError("gate report needs at least one sample")
    acc: dict[str, list] = {}
    for emb, label in samples:
        if emb.g_mr is None:
            raise InputError("gate report needs both gates; got an embedding without g_mr")
        acc.setdefault(str(label), []).append(emb.weights())
    rows = []
    for label, ws in acc.items():
        w = np.mean(np.asarray(ws), axis=0)
        rows.append(GateRow(label, float(w[0]), float(w[1]), float(w[2]), len(ws)))
    return rows


def gate_rows_json(rows) -> str:
    return json.dumps([r.as_dict() for r in rows], indent=2)


def gate_rows_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label", "w_mv", "w_res", "w_ifr", "n"])
    for r in rows:
        writer.writerow([r.label, repr(r.w_mv), repr(r.w_res), repr(r.w_ifr), r.n])
    return buf.getvalue()
