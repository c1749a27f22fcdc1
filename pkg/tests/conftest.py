import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

from tristream.frames import SceneObject, SceneSpec, gen_synthetic  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def translation_scene(velocity, seed=0, size=32, width=64, height=64, texture=24, noise=0, T=2,
                      shape="rect", position=None):
    obj = SceneObject(shape, size, velocity, 200, position, texture=texture)
    return gen_synthetic(SceneSpec([obj], background=30, noise_amplitude=noise, seed=seed), T, width, height)


def random_translation_scene(rng, R=4, width=64, height=64):
    """Integer velocity within [-R, R]^2 and a textured rect that stays in frame."""
    vx, vy = (int(v) for v in rng.integers(-R, R + 1, size=2))
    size = int(rng.integers(20, 33))
    x0 = int(rng.integers(max(0, -vx), width - size - max(0, vx) + 1))
    y0 = int(rng.integers(max(0, -vy), height - size - max(0, vy) + 1))
    seq = translation_scene((vx, vy), seed=int(rng.integers(1 << 30)), size=size, width=width,
                            height=height, position=(x0, y0))
    return seq, (vx, vy), (x0, y0, size)


def interior_blocks(x0, y0, size, v, b, width, height):
    """Grid cells fully inside the object in both frames of a translation pair."""
    vx, vy = v
    lo_x, hi_x = x0 + max(0, vx), x0 + size + min(0, vx)
    lo_y, hi_y = y0 + max(0, vy), y0 + size + min(0, vy)
    cells = []
    for gy in range(height // b):
        for gx in range(width // b):
            if lo_x <= gx * b and (gx + 1) * b <= hi_x and lo_y <= gy * b and (gy + 1) * b <= hi_y:
                cells.append((gy, gx))
    return cells


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import lines
    rows = lines()
    if rows:
        terminalreporter.section("acceptance criteria")
        for row in rows:
            terminalreporter.write_line(row)
