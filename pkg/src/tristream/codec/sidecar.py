"""Exported motion-vector side data (``extract_mvs``-style CSV).

One record per coded block. Coordinates are block centres in pixels and
``(dstx - srcx) * motion_scale`` approximates ``motion_x``; ``framenum`` is the
1-based index of the frame the block belongs to.
"""
from __future__ import annotations

import re
from dataclasses import astuple, dataclass, fields

import numpy as np

from ..errors import FormatError, InputError
from .motion import MotionField

HEADER = "framenum,source,blockw,blockh,srcx,srcy,dstx,dsty,flags,motion_x,motion_y,motion_scale"
_INT = re.compile(r"-?[0-9]+\Z")
BLOCK_SIZES = (4, 8, 16)


@dataclass(frozen=True)
class SidecarRecord:
    framenum: int
    source: int
    blockw: int
    blockh: int
    srcx: int
    srcy: int
    dstx: int
    dsty: int
    flags: int
    motion_x: int
    motion_y: int
    motion_scale: int

    def to_line(self) -> str:
        return ",".join(str(v) for v in astuple(self))


_NAMES = [f.name for f in fields(SidecarRecord)]


def parse_sidecar(text: str) -> list[SidecarRecord]:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].rstrip("\r") != HEADER:
        raise FormatError("missing or wrong sidecar header", line=1)
    records = []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.rstrip("\r")
        parts = line.split(",")
        if len(parts) != len(_NAMES):
            raise FormatError(f"line {lineno}: expected {len(_NAMES)} fields, got {len(parts)}", line=lineno)
        values = []
        for col, tok in enumerate(parts, start=1):
            if not _INT.match(tok):
                raise FormatError(f"line {lineno}, column {col} ({_NAMES[col - 1]}): "
                                  f"{tok!r} is not an integer", line=lineno, column=col)
            values.append(int(tok))
        rec = SidecarRecord(*values)
        problem = _validate(rec)
        if problem:
            col = _NAMES.index(problem[0]) + 1
            raise FormatError(f"line {lineno}, column {col}: {problem[1]}", line=lineno, column=col)
        records.append(rec)
    return records


def _validate(rec):
    if rec.source not in (-1, 1):
        return "source", f"source must be -1 or 1, got {rec.source}"
    if rec.blockw not in BLOCK_SIZES:
        return "blockw", f"block width {rec.blockw} not in {BLOCK_SIZES}"
    if rec.blockh not in BLOCK_SIZES:
        return "blockh", f"block height {rec.blockh} not in {BLOCK_SIZES}"
    if rec.motion_scale not in (1, 2, 4):
        return "motion_scale", f"motion_scale {rec.motion_scale} not in (1, 2, 4)"
    return None


def serialize_sidecar(records) -> str:
    return "".join([HEADER + "\n"] + [r.to_line() + "\n" for r in records])


def field_to_sidecar(field: MotionField, framenum: int) -> list[SidecarRecord]:
    """One record per grid cell, centred on the cell."""
    b, s = field.block_size, field.subpel_scale
    if b not in BLOCK_SIZES:
        raise InputError(f"block size {b} cannot be expressed in sidecar records")
    out = []
    for gy in range(field.grid_h):
        for gx in range(field.grid_w):
            mx, my = (int(v) for v in field.mv[gy, gx])
            dstx, dsty = gx * b + b // 2, gy * b + b // 2
            # nearest whole-pixel source position; ties round up
            srcx = dstx - (2 * mx + s) // (2 * s)
            srcy = dsty - (2 * my + s) // (2 * s)
            out.append(SidecarRecord(framenum, -1, b, b, srcx, srcy, dstx, dsty, 0, mx, my, s))
    return out


def sidecar_to_field(records, framenum: int, frame_dims, block_size: int = 16) -> MotionField:
    """Rasterise variable-size sidecar blocks onto a fixed grid.

    Each grid cell takes the vector of the first record (file order) whose block
    covers the cell centre; uncovered cells are zero.
    """
    width, height = frame_dims
    if width % block_size or height % block_size:
        raise InputError(f"block size {block_size} does not divide {width}x{height}")
    recs = [r for r in records if r.framenum == framenum]
    if any(r.source != -1 for r in recs):
        raise InputError(f"frame {framenum}: only past-reference (source=-1) records are supported")
    scales = {r.motion_scale for r in recs}
    if len(scales) > 1:
        raise InputError(f"frame {framenum}: mixed motion_scale values {sorted(scales)}")
    scale = scales.pop() if scales else 1
    gh, gw = height // block_size, width // block_size
    mv = np.zeros((gh, gw, 2), dtype=np.int32)
    filled = np.zeros((gh, gw), dtype=bool)
    half = block_size // 2
    cy = np.arange(gh) * block_size + half
    cx = np.arange(gw) * block_size + half
    for r in recs:
        if not (0 <= r.dstx < width and 0 <= r.dsty < height):
            raise InputError(f"frame {framenum}: block centred at ({r.dstx}, {r.dsty}) is outside the frame")
        x0 = r.dstx - r.blockw // 2
        y0 = r.dsty - r.blockh // 2
        rows = (cy >= y0) & (cy < y0 + r.blockh)
        cols = (cx >= x0) & (cx < x0 + r.blockw)
        hit = rows[:, None] & cols[None, :] & ~filled
        mv[hit] = (r.motion_x, r.motion_y)
        filled |= hit
    return MotionField(mv, block_size, scale)
