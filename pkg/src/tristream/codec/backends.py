"""Backend routing, tri-stream extraction and the preprocessing benchmark."""
from __future__ import annotations

import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import InputError
from ..frames import FrameBuffer, FrameSequence
from ..hierarchy import Decomposition, Interval, decompose
from .motion import MotionField, ResidualMap, compute_residual, estimate_motion, warp
from .sidecar import sidecar_to_field

NATIVE = "native_fixed_gop"
SIDECAR = "sidecar_export"
RGB_PROXY = "rgb_proxy"
BACKENDS = (NATIVE, SIDECAR, RGB_PROXY)

SIDECAR_CODECS = ("h264", "hevc", "vp9", "av1")
_ALIASES = {
    "avc": "h264", "avc1": "h264", "x264": "h264", "h.264": "h264",
    "h265": "hevc", "hev1": "hevc", "hvc1": "hevc", "h.265": "hevc",
    "vp09": "vp9", "av01": "av1",
    "mp4v": "mpeg4", "mpeg-4": "mpeg4", "xvid": "mpeg4", "divx": "mpeg4",
}
MV_AGGREGATIONS = ("mean", "last", "max-mag")


@dataclass(frozen=True)
class BackendChoice:
    kind: str
    reason: str = ""

    def __post_init__(self):
        if self.kind not in BACKENDS:
            raise InputError(f"unknown backend {self.kind!r}; expected one of {BACKENDS}")


def normalize_codec(tag: str) -> str:
    t = tag.strip().lower()
    return _ALIASES.get(t, t)


def route_backend(codec_tag: str, native_available: bool, sidecar_available: bool) -> BackendChoice:
    """Pick the extraction path for a stream; falls back to the RGB proxy."""
    if not codec_tag or not codec_tag.strip():
        raise InputError("codec tag must be non-empty")
    tag = normalize_codec(codec_tag)
    if tag == "mpeg4" and native_available:
        return BackendChoice(NATIVE, "mpeg4 with a fixed-GOP native reader")
    if tag in SIDECAR_CODECS and sidecar_available:
        return BackendChoice(SIDECAR, f"{tag} motion vectors exported as side data")
    if tag == "mpeg4":
        why = "mpeg4 without a native reader"
    elif tag in SIDECAR_CODECS:
        why = f"{tag} without exported side data"
    else:
        why = f"codec {tag!r} has no motion-vector export"
    return BackendChoice(RGB_PROXY, why + "; decoded-frame proxy")


@dataclass(frozen=True)
class ExtractParams:
    block_size: int = 16
    search_range: int = 8
    subpel_scale: int = 4
    mv_agg: str = "mean"
    ifr_downscale: int = 2
    sidecar_records: tuple | None = None
    threads: int = 1


@dataclass(frozen=True)
class TriStreamInterval:
    ifr: FrameBuffer
    mv: MotionField
    res: ResidualMap
    k: int = 0
    start: int = 0
    stop: int = 0


def downscale(frame: FrameBuffer, factor: int) -> FrameBuffer:
    """Box-filter downscale with round-half-up."""
    if factor == 1:
        return frame
    if factor < 1 or frame.height % factor or frame.width % factor:
        raise InputError(f"downscale factor {factor} does not divide {frame.width}x{frame.height}")
    H, W, C = frame.shape
    blocks = frame.data.astype(np.int64).reshape(H // factor, factor, W // factor, factor, C)
    n = factor * factor
    return FrameBuffer(((blocks.sum(axis=(1, 3)) + n // 2) // n).astype(np.uint8))


def aggregate_fields(fields_, how: str = "mean") -> MotionField:
    first = fields_[0]
    if how == "last":
        return fields_[-1]
    stack = np.stack([f.mv for f in fields_]).astype(np.int64)
    if how == "mean":
        # round half up on the exact rational mean
        n = len(fields_)
        mv = np.floor_divide(2 * stack.sum(axis=0) + n, 2 * n)
    elif how == "max-mag":
        mag = (stack ** 2).sum(axis=-1)
        pick = mag.argmax(axis=0)
        mv = np.take_along_axis(stack, pick[None, :, :, None], axis=0)[0]
    else:
        raise InputError(f"unknown mv aggregation {how!r}; expected one of {MV_AGGREGATIONS}")
    return MotionField(mv, first.block_size, first.subpel_scale)


def _transitions(iv: Interval, T: int):
    end = min(iv.stop, T)
    frames = list(range(iv.start + 1, end + 1))
    if not frames:
        frames = [iv.start] if iv.start > 1 else [2]
    return frames


def _effective(backend: BackendChoice, params: ExtractParams) -> ExtractParams:
    if backend.kind == NATIVE:
        # MPEG-4 Part 2 profile: half-pel, fixed 16x16 macroblocks
        return replace(params, block_size=16, subpel_scale=2)
    return params


def _field_for(seq, f, backend, params):
    if backend.kind == SIDECAR:
        recs = params.sidecar_records
        if recs is None:
            raise InputError("sidecar backend needs sidecar_records")
        if not any(r.framenum == f for r in recs):
            raise InputError(f"sidecar records missing for frame {f}")
        return sidecar_to_field(recs, f, (seq.width, seq.height), params.block_size)
    return estimate_motion(seq.frame(f - 1), seq.frame(f), params.block_size,
                           params.search_range, params.subpel_scale)


def extract_interval(seq: FrameSequence, iv: Interval, backend: BackendChoice,
                     params: ExtractParams) -> TriStreamInterval:
    T = len(seq)
    if iv.start < 1 or iv.start > T or iv.stop > T + 1:
        raise InputError(f"interval {iv.k} [{iv.start}, {iv.stop}) outside a {T}-frame sequence")
    frames = _transitions(iv, T)
    fields_ = [_field_for(seq, f, backend, params) for f in frames]
    mv = aggregate_fields(fields_, params.mv_agg)
    last = frames[-1]
    res = compute_residual(seq.frame(last), warp(seq.frame(last - 1), fields_[-1]))
    ifr = downscale(seq.frame(iv.start), params.ifr_downscale)
    return TriStreamInterval(ifr, mv, res, iv.k, iv.start, iv.stop)


def extract_tristream(seq: FrameSequence, decomp: Decomposition, backend: BackendChoice,
                      params: ExtractParams | None = None) -> list[TriStreamInterval]:
    """One (I-frame patch, motion field, residual) bundle per interval.

    Intervals are independent, so ``params.threads > 1`` fans them out over a
    thread pool; output order always follows ``decomp.intervals``.
    """
    params = _effective(backend, params or ExtractParams())
    if params.mv_agg not in MV_AGGREGATIONS:
        raise InputError(f"unknown mv aggregation {params.mv_agg!r}")
    if decomp.T != len(seq):
        raise InputError(f"decomposition built for T={decomp.T}, sequence has {len(seq)} frames")
    if params.threads > 1 and len(decomp.intervals) > 1:
        with ThreadPoolExecutor(max_workers=params.threads) as pool:
            return list(pool.map(lambda iv: extract_interval(seq, iv, backend, params), decomp.intervals))
    return [extract_interval(seq, iv, backend, params) for iv in decomp.intervals]


@dataclass(frozen=True)
class LatencyReport:
    backend: BackendChoice
    video_seconds: float
    wall_ms: float
    ms_per_video_second: float
    repeats: int = 1
    threads: int = 1
    samples_ms: tuple = field(default_factory=tuple)

    def as_dict(self) -> dict:
        return {
            "backend": self.backend.kind,
            "reason": self.backend.reason,
            "video_seconds": self.video_seconds,
            "wall_ms": self.wall_ms,
            "ms_per_video_second": self.ms_per_video_second,
            "repeats": self.repeats,
            "threads": self.threads,
            "samples_ms": list(self.samples_ms),
        }


def bench_backend(seq: FrameSequence, backend: BackendChoice, params: ExtractParams | None = None,
                  repeats: int = 3, n_anchors: int = 8, decomp: Decomposition | None = None) -> LatencyReport:
    """Median single-thread extraction time, normalised per second of video."""
    if repeats < 1:
        raise InputError("repeats must be >= 1")
    params = replace(params or ExtractParams(), threads=1)
    if decomp is None:
        decomp = decompose(len(seq), min(n_anchors, len(seq)))
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        extract_tristream(seq, decomp, backend, params)
        samples.append((time.perf_counter() - t0) * 1000.0)
    wall = statistics.median(samples)
    secs = seq.duration
    return LatencyReport(backend, secs, wall, wall / secs, repeats, 1, tuple(samples))


def default_threads() -> int:
    return os.cpu_count() or 1
