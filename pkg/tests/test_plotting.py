import numpy as np

from tristream.alignment import TrainHistory
from tristream.codec.motion import MotionField, ResidualMap
from tristream.plotting import (
    plot_budget, plot_gate_weights, plot_latency, plot_training_curve, render_mv, render_residual,
)


def test_zero_field_is_mid_gray():
    img = render_mv(MotionField.zeros(2, 3, 8)).data
    assert img.shape == (16, 24, 3) and np.all(img == 128)


def test_uniform_field_is_one_flat_hue():
    img = render_mv(MotionField(np.tile(np.array([4, -2], np.int32), (3, 3, 1)))).data
    assert len(np.unique(img.reshape(-1, 3), axis=0)) == 1
    assert not np.all(img == 128)


def test_opposite_directions_get_different_hues():
    mv = np.array([[[4, 0], [-4, 0]]], np.int32)
    img = render_mv(MotionField(mv, 4)).data
    assert not np.array_equal(img[0, 0], img[0, 4])


def test_residual_gray_mapping():
    assert np.all(render_residual(ResidualMap(np.zeros((4, 4, 1)))).data == 128)
    r = render_residual(ResidualMap(np.array([[-255, -1, 1, 3, 255]]))).data[0, :, 0]
    assert r.tolist() == [1, 128, 129, 130, 255]


def test_figures_are_written(tmp_path):
    h = TrainHistory()
    for i in range(120):
        h.append(3.0 - i / 100, i / 200, 0.1)
    rows = [{"label": "a", "w_mv": 0.2, "w_res": 0.3, "w_ifr": 0.5}]
    paths = [
        plot_training_curve(h, tmp_path / "c.png"),
        plot_gate_weights(rows, tmp_path / "g.png"),
        plot_latency([{"backend": "rgb_proxy", "ms_per_video_second": 12.0}], tmp_path / "l.png"),
        plot_budget({"anchor_tokens": 10, "motion_tokens": 5, "text_overhead": 0, "total": 15}, tmp_path / "b.png", 40),
    ]
    for p in paths:
        assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
