"""Frame containers, raw/PPM I/O and a deterministic synthetic scene generator.

Frames are 8-bit, row-major and channel-interleaved: a ``FrameBuffer`` wraps an
``(height, width, channels)`` uint8 array. The generator renders moving
rectangles and ellipses with known per-frame displacement so that motion
estimation can be checked against ground truth.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._interp import shift_frame
from .errors import FormatError, InputError

MIN_SIDE = 16
# half-integer velocities are rendered on a half-pel grid
_RENDER_SCALE = 2


@dataclass(frozen=True, eq=False)
class FrameBuffer:
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise InputError(f"frame must be (H, W, 1|3), got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InputError("frame must be non-empty")
        arr = np.array(arr, dtype=np.uint8, order="C", copy=True)
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

    @property
    def shape(self):
        return self.data.shape

    @classmethod
    def from_bytes(cls, buf: bytes, width: int, height: int, channels: int) -> "FrameBuffer":
        expected = width * height * channels
        if len(buf) != expected:
            raise FormatError(f"expected {expected} bytes, got {len(buf)}")
        arr = np.frombuffer(buf, dtype=np.uint8).reshape(height, width, channels)
        return cls(arr.copy())

    def tobytes(self) -> bytes:
        return self.data.tobytes()

    def __eq__(self, other):
        if not isinstance(other, FrameBuffer):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class FrameSequence:
    frames: tuple
    fps: float = 30.0

    def __post_init__(self):
        frames = tuple(f if isinstance(f, FrameBuffer) else FrameBuffer(f) for f in self.frames)
        if len(frames) < 2:
            raise InputError(f"a sequence needs at least 2 frames, got {len(frames)}")
        shape = frames[0].shape
        for i, f in enumerate(frames):
            if f.shape != shape:
                raise InputError(f"frame {i} has shape {f.shape}, expected {shape}")
        if self.fps <= 0:
            raise InputError("fps must be positive")
        object.__setattr__(self, "frames", frames)

    def __len__(self):
        return len(self.frames)

    def __getitem__(self, i):
        return self.frames[i]

    def __iter__(self):
        return iter(self.frames)

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def channels(self) -> int:
        return self.frames[0].channels

    @property
    def duration(self) -> float:
        """Length in seconds."""
        return len(self.frames) / self.fps

    def frame(self, t: int) -> FrameBuffer:
        """1-based frame access, matching anchor indices."""
        if not 1 <= t <= len(self.frames):
            raise InputError(f"frame index {t} outside [1, {len(self.frames)}]")
        return self.frames[t - 1]


@dataclass(frozen=True)
class SceneObject:
    """One moving object.

    ``size`` is a side length or ``(w, h)``; ``position`` is the top-left corner
    at the first frame (centered when omitted). ``texture`` adds a fixed
    pseudo-random pattern of that amplitude that moves with the object, which
    removes the aperture ambiguity of flat shapes.
    """

    shape: str = "rect"
    size: int | tuple = 16
    velocity: tuple = (0, 0)
    intensity: int = 255
    position: tuple | None = None
    texture: int = 0


@dataclass(frozen=True)
class SceneSpec:
    objects: tuple = ()
    background: int = 0
    noise_amplitude: int = 0
    seed: int = 0
    channels: int = 1

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))


def _half_units(v, idx):
    out = []
    for comp in v:
        doubled = Fraction(comp).limit_denominator(1000) * 2
        if doubled.denominator != 1:
            raise InputError(f"object {idx}: velocity {tuple(v)} is not integer or half-integer")
        out.append(int(doubled))
    return out


def gen_synthetic(spec: SceneSpec, T: int, width: int, height: int) -> FrameSequence:
    """Render ``T`` frames of ``spec``.

    Object ``i`` at frame ``t`` (0-based) is its first-frame rendering translated
    by ``t * velocity`` with half-pel bilinear resampling, so consecutive frames
    differ by exactly ``velocity`` inside the object's support.
    """
    if T < 2:
        raise InputError(f"T must be >= 2, got {T}")
    if width % 16 or height % 16 or width < MIN_SIDE or height < MIN_SIDE:
        raise InputError(f"dimensions {width}x{height} must be positive multiples of 16")
    if spec.channels not in (1, 3):
        raise InputError("channels must be 1 or 3")
    C = spec.channels
    bg = int(spec.background)

    layers = []
    for idx, obj in enumerate(spec.objects):
        w, h = (obj.size, obj.size) if np.isscalar(obj.size) else tuple(obj.size)
        w, h = int(w), int(h)
        if w < 1 or h < 1 or w > width or h > height:
            raise InputError(f"object {idx}: size {w}x{h} does not fit {width}x{height}")
        if obj.shape not in ("rect", "ellipse"):
            raise InputError(f"object {idx}: unknown shape {obj.shape!r}")
        x0, y0 = obj.position if obj.position is not None else ((width - w) // 2, (height - h) // 2)
        x0, y0 = int(x0), int(y0)
        ux, uy = _half_units(obj.velocity, idx)
        # extent check over every step, one extra pixel for the bilinear footprint
        for t in range(T):
            dx2, dy2 = t * ux, t * uy
            lo_x = x0 + (dx2 // 2)
            lo_y = y0 + (dy2 // 2)
            hi_x = x0 + w + (dx2 + 1) // 2
            hi_y = y0 + h + (dy2 + 1) // 2
            if lo_x < 0 or lo_y < 0 or hi_x > width or hi_y > height:
                raise InputError(f"object {idx} leaves the frame at step {t}")

        mask = np.zeros((height, width), dtype=bool)
        yy, xx = np.mgrid[0:h, 0:w]
        if obj.shape == "rect":
            local = np.ones((h, w), dtype=bool)
        else:
            cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
            local = ((xx - cx) / (w / 2.0)) ** 2 + ((yy - cy) / (h / 2.0)) ** 2 <= 1.0
        mask[y0:y0 + h, x0:x0 + w] = local

        value = np.full((h, w), int(obj.intensity), dtype=np.int64)
        if obj.texture:
            rng = np.random.default_rng([spec.seed, idx])
            value = value + rng.integers(-obj.texture, obj.texture + 1, size=(h, w))
        layer = np.full((height, width), bg, dtype=np.int64)
        layer[y0:y0 + h, x0:x0 + w] = np.where(local, value, bg)
        layer = np.clip(layer, 0, 255).astype(np.uint8)
        layers.append((np.repeat(layer[:, :, None], C, axis=2),
                       (mask.astype(np.uint8) * 255)[:, :, None], ux, uy))

    rng = np.random.default_rng(spec.seed)
    frames = []
    for t in range(T):
        frame = np.full((height, width, C), bg, dtype=np.uint8)
        for layer, mask, ux, uy in layers:
            moved = shift_frame(layer, t * uy, t * ux, _RENDER_SCALE)
            support = shift_frame(mask, t * uy, t * ux, _RENDER_SCALE)[:, :, 0] > 0
            frame[support] = moved[support]
        if spec.noise_amplitude:
            a = int(spec.noise_amplitude)
            noise = rng.integers(-a, a + 1, size=frame.shape)
            frame = np.clip(frame.astype(np.int64) + noise, 0, 255).astype(np.uint8)
        frames.append(FrameBuffer(frame))
    return FrameSequence(tuple(frames))


def load_raw(path, width: int, height: int, channels: int, fps: float = 30.0) -> FrameSequence:
    """Read a headerless file of concatenated frames."""
    framesize = width * height * channels
    if framesize <= 0:
        raise InputError("width, height and channels must be positive")
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) % framesize:
        lower = (len(buf) // framesize) * framesize
        raise FormatError(
            f"{os.fspath(path)}: size {len(buf)} bytes is not a multiple of the "
            f"{framesize}-byte frame size (expected {lower} or {lower + framesize} bytes)",
            offset=lower,
        )
    T = len(buf) // framesize
    if T < 2:
        raise FormatError(f"{os.fspath(path)}: holds {T} frame(s), need at least 2")
    arr = np.frombuffer(buf, dtype=np.uint8).reshape(T, height, width, channels)
    return FrameSequence(tuple(FrameBuffer(a.copy()) for a in arr), fps=fps)


def save_raw(seq: FrameSequence, path) -> None:
    with open(path, "wb") as fh:
        for f in seq:
            fh.write(f.tobytes())


def save_ppm(frame: FrameBuffer, path) -> None:
    """Binary PGM (P5) for one channel, PPM (P6) for three; maxval 255."""
    magic = {1: b"P5", 3: b"P6"}.get(frame.channels)
    if magic is None:
        raise InputError(f"cannot write {frame.channels}-channel frame as PPM/PGM")
    header = magic + b"\n%d %d\n255\n" % (frame.width, frame.height)
    with open(path, "wb") as fh:
        fh.write(header + frame.tobytes())


def _read_token(buf, pos):
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError("truncated PPM header", offset=start)
    return buf[start:pos], pos


def load_ppm(path) -> FrameBuffer:
    with open(path, "rb") as fh:
        buf = fh.read()
    magic, pos = _read_token(buf, 0)
    channels = {b"P5": 1, b"P6": 3}.get(magic)
    if channels is None:
        raise FormatError(f"unsupported magic {magic!r}", offset=0)
    vals = []
    for _ in range(3):
        tok, pos = _read_token(buf, pos)
        if not tok.isdigit():
            raise FormatError(f"bad header field {tok!r}", offset=pos - len(tok))
        vals.append(int(tok))
    width, height, maxval = vals
    if maxval != 255:
        raise FormatError(f"only maxval 255 is supported, got {maxval}")
    pos += 1  # single whitespace byte ends the header
    payload = buf[pos:]
    return FrameBuffer.from_bytes(payload, width, height, channels)
