"""``.trs`` tri-stream container.

Layout (little-endian, no padding)::

    b"TRS1"
    u32 version=1, K, block_size, subpel_scale, ifr_w, ifr_h, grid_w, grid_h, channels
    K x ( ifr      u8  [ifr_h, ifr_w, channels]
          mv       i16 [grid_h, grid_w, 2]        (dx, dy) in sub-pel units
          residual i16 [grid_h*block_size, grid_w*block_size, channels] )
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import FormatError, InputError
from ..frames import FrameBuffer
from .backends import TriStreamInterval
from .motion import MotionField, ResidualMap

MAGIC = b"TRS1"
VERSION = 1
_FIELDS = ("version", "K", "block_size", "subpel_scale", "ifr_w", "ifr_h", "grid_w", "grid_h", "channels")
_HEADER = struct.Struct("<4s9I")


@dataclass(frozen=True)
class TrsHeader:
    version: int
    K: int
    block_size: int
    subpel_scale: int
    ifr_w: int
    ifr_h: int
    grid_w: int
    grid_h: int
    channels: int

    @property
    def record_sizes(self):
        ifr = self.ifr_w * self.ifr_h * self.channels
        mv = self.grid_w * self.grid_h * 2 * 2
        res = self.grid_w * self.grid_h * self.block_size ** 2 * self.channels * 2
        return ifr, mv, res


def dumps_trs(intervals) -> bytes:
    intervals = list(intervals)
    if not intervals:
        raise InputError("nothing to write: no intervals")
    first = intervals[0]
    head = TrsHeader(VERSION, len(intervals), first.mv.block_size, first.mv.subpel_scale,
                     first.ifr.width, first.ifr.height, first.mv.grid_w, first.mv.grid_h,
                     first.ifr.channels)
    parts = [_HEADER.pack(MAGIC, *(getattr(head, f) for f in _FIELDS))]
    for i, iv in enumerate(intervals):
        if (iv.mv.block_size, iv.mv.subpel_scale, iv.mv.grid_w, iv.mv.grid_h) != \
                (head.block_size, head.subpel_scale, head.grid_w, head.grid_h):
            raise InputError(f"interval {i}: motion field geometry differs from interval 0")
        if iv.ifr.shape != first.ifr.shape:
            raise InputError(f"interval {i}: I-frame patch shape differs from interval 0")
        if iv.res.data.shape != (iv.mv.height, iv.mv.width, head.channels):
            raise InputError(f"interval {i}: residual shape {iv.res.data.shape} does not match the grid")
        parts.append(iv.ifr.tobytes())
        parts.append(iv.mv.mv.astype("<i2").tobytes())
        parts.append(iv.res.data.astype("<i2").tobytes())
    return b"".join(parts)


def loads_trs(buf: bytes) -> tuple[TrsHeader, list[TriStreamInterval]]:
    if len(buf) < 4 or buf[:4] != MAGIC:
        bad = next((i for i in range(min(4, len(buf))) if buf[i] != MAGIC[i]), len(buf))
        raise FormatError(f"bad magic at offset {bad}", offset=bad)
    if len(buf) < _HEADER.size:
        raise FormatError(f"truncated header at offset {len(buf)}", offset=len(buf))
    values = _HEADER.unpack_from(buf)[1:]
    head = TrsHeader(*values)
    checks = {
        "version": lambda v: v == VERSION,
        "K": lambda v: v >= 1,
        "block_size": lambda v: v >= 1,
        "subpel_scale": lambda v: v in (1, 2, 4),
        "ifr_w": lambda v: v >= 1,
        "ifr_h": lambda v: v >= 1,
        "grid_w": lambda v: v >= 1,
        "grid_h": lambda v: v >= 1,
        "channels": lambda v: v in (1, 3),
    }
    for i, name in enumerate(_FIELDS):
        if not checks[name](getattr(head, name)):
            off = 4 + 4 * i
            raise FormatError(f"invalid {name}={getattr(head, name)} at offset {off}", offset=off)

    n_ifr, n_mv, n_res = head.record_sizes
    rec = n_ifr + n_mv + n_res
    expected = _HEADER.size + head.K * rec
    if len(buf) < expected:
        raise FormatError(f"truncated body: {len(buf)} bytes, expected {expected}; "
                          f"first missing byte at offset {len(buf)}", offset=len(buf))
    if len(buf) > expected:
        raise FormatError(f"{len(buf) - expected} trailing bytes starting at offset {expected}",
                          offset=expected)

    H, W = head.grid_h * head.block_size, head.grid_w * head.block_size
    out = []
    pos = _HEADER.size
    for k in range(head.K):
        ifr = np.frombuffer(buf, np.uint8, n_ifr, pos).reshape(head.ifr_h, head.ifr_w, head.channels)
        pos += n_ifr
        mv = np.frombuffer(buf, "<i2", n_mv // 2, pos).reshape(head.grid_h, head.grid_w, 2)
        pos += n_mv
        res = np.frombuffer(buf, "<i2", n_res // 2, pos)
        bad = np.flatnonzero((res < -255) | (res > 255))
        if bad.size:
            off = pos + 2 * int(bad[0])
            raise FormatError(f"residual value {int(res[bad[0]])} out of range at offset {off}", offset=off)
        res = res.reshape(H, W, head.channels)
        pos += n_res
        out.append(TriStreamInterval(FrameBuffer(ifr), MotionField(mv, head.block_size, head.subpel_scale),
                                     ResidualMap(res), k))
    return head, out


def write_trs(path, intervals) -> None:
    data = dumps_trs(intervals)
    with open(path, "wb") as fh:
        fh.write(data)


def read_trs(path):
    with open(path, "rb") as fh:
        return loads_trs(fh.read())
