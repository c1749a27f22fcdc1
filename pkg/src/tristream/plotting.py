"""Image renderings of codec streams and report figures.

Stream renderings are plain uint8 arrays suitable for PPM output. Figures use
matplotlib's Agg backend and are written straight to files.
"""
from __future__ import annotations

import numpy as np

from .codec.motion import MotionField, ResidualMap
from .frames import FrameBuffer

MID_GRAY = 128


def render_mv(field: MotionField, max_magnitude: float | None = None) -> FrameBuffer:
    """Direction to hue, magnitude to saturation over a mid-gray base.

    Each pixel blends gray 128 toward the fully saturated hue of its vector
    direction by ``|v| / max_magnitude`` (the field maximum by default), so a
    zero field is uniform gray and a uniform field is a single flat colour.
    """
    from matplotlib.colors import hsv_to_rgb

    v = field.dense()
    mag = np.hypot(v[..., 0], v[..., 1])
    top = float(mag.max()) if max_magnitude is None else float(max_magnitude)
    alpha = np.clip(mag / top, 0.0, 1.0) if top > 0 else np.zeros_like(mag)
    hue = (np.arctan2(v[..., 1], v[..., 0]) / (2 * np.pi)) % 1.0
    hsv = np.stack([hue, np.ones_like(hue), np.ones_like(hue)], axis=-1)
    rgb = hsv_to_rgb(hsv) * 255.0
    out = MID_GRAY + alpha[..., None] * (rgb - MID_GRAY)
    return FrameBuffer(np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8))


def render_residual(res: ResidualMap) -> FrameBuffer:
    """Signed residual as gray ``clip(128 + round(r / 2))``, halves rounded up."""
    r = res.data.astype(np.int32)
    return FrameBuffer(np.clip(MID_GRAY + np.floor_divide(r + 1, 2), 0, 255).astype(np.uint8))


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def plot_training_curve(history, path, window: int = 50):
    plt = _pyplot()
    steps = np.arange(len(history.loss))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    ax1.plot(steps, history.loss, lw=0.8, color="0.6", label="batch")
    if len(steps) >= window:
        kernel = np.ones(window) / window
        ax1.plot(steps[window - 1:], np.convolve(history.loss, kernel, mode="valid"), color="C0",
                 label=f"{window}-step mean")
    ax1.set_xlabel("step")
    ax1.set_ylabel("loss")
    ax1.legend(frameon=False)
    ax2.plot(steps, history.mean_cosine, color="C1")
    ax2.set_xlabel("step")
    ax2.set_ylabel("mean cosine")
    ax2.set_ylim(-1, 1)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_gate_weights(rows, path):
    """Stacked per-label bars of the effective mv / res / ifr weights."""
    plt = _pyplot()
    labels = [r["label"] if isinstance(r, dict) else r.label for r in rows]
    get = (lambda r, k: r[k]) if rows and isinstance(rows[0], dict) else getattr
    w = np.array([[get(r, "w_mv"), get(r, "w_res"), get(r, "w_ifr")] for r in rows])
    fig, ax = plt.subplots(figsize=(1.2 * len(rows) + 2, 3.2))
    bottom = np.zeros(len(rows))
    for i, name in enumerate(("mv", "res", "ifr")):
        ax.bar(labels, w[:, i], bottom=bottom, label=name)
        bottom += w[:, i]
    ax.set_ylim(0, 1)
    ax.set_ylabel("effective weight")
    ax.legend(frameon=False, ncol=3, loc="upper center", bbox_to_anchor=(0.5, 1.15))
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_latency(reports, path):
    plt = _pyplot()
    names = [r["backend"] for r in reports]
    vals = [r["ms_per_video_second"] for r in reports]
    fig, ax = plt.subplots(figsize=(1.5 * len(reports) + 2, 3.2))
    ax.bar(names, vals, color="C2")
    ax.set_ylabel("ms per video second")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_budget(budget: dict, path, dense_total: int | None = None):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4, 3.2))
    parts = [("anchor", budget["anchor_tokens"]), ("motion", budget["motion_tokens"]),
             ("text", budget["text_overhead"])]
    bottom = 0
    for name, n in parts:
        ax.bar(["tri-stream"], [n], bottom=bottom, label=name)
        bottom += n
    if dense_total is not None:
        ax.bar(["dense"], [dense_total], color="0.6")
    ax.set_ylabel("context tokens")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
