"""Desk-scale Stage-1 alignment trainer and its synthetic motion dataset.

The adapter (three branch encoders, fusion, alignment head) is trained with
hand-derived gradients and SGD with momentum. Because every branch encoder is
affine in the per-interval mean patch, the dataset stores those mean patches
directly and the encoders become plain matrix products.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import alignment as al
from .adapter import FusedEmbedding, FusionMode, gate_report, mean_patch, sigmoid, to_branch_array
from .codec.backends import RGB_PROXY, BackendChoice, ExtractParams, extract_interval
from .errors import InputError
from .frames import SceneObject, SceneSpec, gen_synthetic
from .hierarchy import decompose

LOSSES = ("infonce", "mse", "hybrid")
SCHEDULES = ("cosine", "constant")
DIRECTIONS = {"right": (1, 0), "left": (-1, 0), "down": (0, 1), "up": (0, -1)}
BRANCHES = ("mv", "res", "ifr")


class DivergenceError(RuntimeError):
    def __init__(self, step, loss):
        super().__init__(f"training diverged at step {step} (loss={loss})")
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 500
    lr: float = 0.05
    B: int = 32
    d: int = 64
    d_v: int = 0  # 0 = take from the data
    lam_cos: float = al.DEFAULT_LAMBDA_COS
    loss: str = "infonce"
    seed: int = 0
    momentum: float = 0.9
    clip: float = 1.0
    fusion: str = "gated"
    mse_weight: float = al.DEFAULT_MSE_WEIGHT
    branch_heads: bool = False
    tau_init: float = 0.1
    schedule: str = "cosine"

    def validate(self):
        if self.steps < 1:
            raise InputError("steps must be >= 1")
        if self.B < 2:
            raise InputError("B must be >= 2")
        if self.loss not in LOSSES:
            raise InputError(f"loss must be one of {LOSSES}")
        FusionMode(self.fusion)
        if self.schedule not in SCHEDULES:
            raise InputError(f"schedule must be one of {SCHEDULES}")
        if self.lr <= 0 or self.tau_init <= 0 or self.d < 1:
            raise InputError("lr, tau_init and d must be positive")
        return self

    @classmethod
    def from_text(cls, text: str, **overrides) -> "TrainConfig":
        """Parse flat ``key=value`` lines; ``#`` starts a comment."""
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"config line {lineno}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key == "lambda_cos":
                key = "lam_cos"
            if key not in types:
                raise InputError(f"config line {lineno}: unknown key {key!r}")
            values[key] = _coerce(types[key], val, lineno)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values).validate()

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in asdict(self).items())


def _coerce(kind, val, lineno):
    try:
        if kind in ("int", int):
            return int(val)
        if kind in ("float", float):
            return float(val)
        if kind in ("bool", bool):
            if val.lower() in ("1", "true", "yes", "on"):
                return True
            if val.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(val)
    except ValueError:
        raise InputError(f"config line {lineno}: bad value {val!r}") from None
    return val


@dataclass(frozen=True, eq=False)
class MotionDataset:
    X_mv: np.ndarray
    X_res: np.ndarray
    X_ifr: np.ndarray
    V: np.ndarray
    labels: np.ndarray
    label_names: tuple

    def __len__(self):
        return len(self.labels)

    @property
    def d_v(self) -> int:
        return self.V.shape[1]

    def inputs(self, idx=None):
        if idx is None:
            return self.X_mv, self.X_res, self.X_ifr
        return self.X_mv[idx], self.X_res[idx], self.X_ifr[idx]


@dataclass(frozen=True)
class DatasetSpec:
    n_intervals: int = 256
    size: int = 64
    T: int = 5
    block_size: int = 8
    search_range: int = 4
    subpel_scale: int = 2
    mv_patch: int = 4
    res_patch: int = 16
    ifr_patch: int = 8
    noise: int = 2
    seed: int = 0


def interval_features(interval, spec: DatasetSpec):
    return (mean_patch(to_branch_array(interval.mv), spec.mv_patch),
            mean_patch(to_branch_array(interval.res), spec.res_patch),
            mean_patch(to_branch_array(interval.ifr), spec.ifr_patch))


def make_motion_dataset(spec: DatasetSpec = DatasetSpec()) -> MotionDataset:
    """Balanced up/down/left/right translation clips, one interval each.

    Each clip has two anchors bracketing a single interval; the interval's
    tri-stream comes from the RGB-proxy backend and its target is the visual
    delta between the anchor frames' host features.
    """
    if spec.n_intervals < 4:
        raise InputError("need at least 4 intervals (one per class)")
    rng = np.random.default_rng(spec.seed)
    names = tuple(DIRECTIONS)
    decomp = decompose(spec.T, 2, convention="between")
    iv = decomp.intervals[0]
    t0, t1 = decomp.anchors
    params = ExtractParams(block_size=spec.block_size, search_range=spec.search_range,
                           subpel_scale=spec.subpel_scale)
    backend = BackendChoice(RGB_PROXY, "synthetic dataset")
    xs = {b: [] for b in BRANCHES}
    targets, labels = [], []
    for i in range(spec.n_intervals):
        label = i % 4
        ux, uy = DIRECTIONS[names[label]]
        speed = rng.choice([1.0, 1.5, 2.0, 2.5, 3.0])
        side = rng.choice([0.0, 0.5, -0.5]) if rng.random() < 0.3 else 0.0
        vx, vy = ux * speed + uy * side, uy * speed + ux * side
        size = int(rng.integers(12, 21))
        travel = int(np.ceil((spec.T - 1) * max(abs(vx), abs(vy)))) + 1
        lo, hi = travel, spec.size - size - travel
        pos = (int(rng.integers(lo, hi + 1)), int(rng.integers(lo, hi + 1)))
        obj = SceneObject(shape=str(rng.choice(["rect", "ellipse"])), size=size, velocity=(vx, vy),
                          intensity=int(rng.integers(150, 256)), position=pos, texture=24)
        scene = SceneSpec([obj], background=int(rng.integers(0, 60)), noise_amplitude=spec.noise,
                          seed=int(rng.integers(2 ** 31)))
        seq = gen_synthetic(scene, spec.T, spec.size, spec.size)
        tri = extract_interval(seq, iv, backend, params)
        for b, x in zip(BRANCHES, interval_features(tri, spec)):
            xs[b].append(x)
        targets.append(al.visual_delta(al.host_features(seq.frame(t1)), al.host_features(seq.frame(t0))))
        labels.append(label)
    return MotionDataset(np.array(xs["mv"]), np.array(xs["res"]), np.array(xs["ifr"]),
                         np.array(targets), np.array(labels), names)


# ---------------------------------------------------------------- the model

def init_params(config: TrainConfig, dims) -> dict:
    """Fresh parameters; ``dims`` = (f_mv, f_res, f_ifr, d_v)."""
    f_mv, f_res, f_ifr, d_v = dims
    rng = np.random.default_rng(config.seed)
    d = config.d
    p = {}
    for name, fan in zip(BRANCHES, (f_mv, f_res, f_ifr)):
        p[f"P_{name}"] = rng.normal(0, 1 / np.sqrt(fan), (d, fan))
        p[f"b_{name}"] = np.zeros(d)
    mode = FusionMode(config.fusion)
    if mode is FusionMode.GATED:
        for g in ("mr", "tri"):
            p[f"W_{g}"] = rng.normal(0, 0.01, (d, 2 * d))
            p[f"g_{g}"] = np.zeros(d)
    elif mode is FusionMode.CONCAT:
        p["W_cat"] = rng.normal(0, 1 / np.sqrt(3 * d), (d, 3 * d))
        p["b_cat"] = np.zeros(d)
    elif mode is FusionMode.WEIGHTED_SUM:
        p["logits"] = np.zeros(3)
    else:
        p["W1"] = rng.normal(0, 1 / np.sqrt(3 * d), (d, 3 * d))
        p["b1"] = np.zeros(d)
        p["W2"] = rng.normal(0, 1 / np.sqrt(d), (d, d))
        p["b2"] = np.zeros(d)
    p["A"] = rng.normal(0, 1 / np.sqrt(d), (d_v, d))
    p["log_tau"] = np.array(np.log(config.tau_init))
    if config.branch_heads:
        for name in BRANCHES:
            p[f"A_{name}"] = rng.normal(0, 1 / np.sqrt(d), (d_v, d))
    return p


def forward(p, mode, X_mv, X_res, X_ifr):
    """Returns ``(M, cache)`` with ``M = A @ h_fused`` per row."""
    c = {"X": (X_mv, X_res, X_ifr)}
    hs = [X @ p[f"P_{n}"].T + p[f"b_{n}"] for X, n in zip(c["X"], BRANCHES)]
    c["h"] = hs
    h_mv, h_res, h_ifr = hs
    d = h_mv.shape[1]
    mode = FusionMode(mode)
    if mode is FusionMode.GATED:
        u1 = np.concatenate([h_mv, h_res], axis=1)
        g1 = sigmoid(u1 @ p["W_mr"].T + p["g_mr"])
        h_mr = g1 * h_mv + (1 - g1) * h_res
        u2 = np.concatenate([h_mr, h_ifr], axis=1)
        g2 = sigmoid(u2 @ p["W_tri"].T + p["g_tri"])
        h = g2 * h_mr + (1 - g2) * h_ifr
        c.update(u1=u1, g1=g1, h_mr=h_mr, u2=u2, g2=g2)
    elif mode is FusionMode.CONCAT:
        u = np.concatenate(hs, axis=1)
        h = u @ p["W_cat"].T + p["b_cat"]
        c["u"] = u
    elif mode is FusionMode.WEIGHTED_SUM:
        z = p["logits"] - p["logits"].max()
        w = np.exp(z) / np.exp(z).sum()
        h = w[0] * h_mv + w[1] * h_res + w[2] * h_ifr
        c["w"] = w
    else:
        u = np.concatenate(hs, axis=1)
        a = np.tanh(u @ p["W1"].T + p["b1"])
        h = a @ p["W2"].T + p["b2"]
        c.update(u=u, a=a)
    c["h_fused"] = h
    c["d"] = d
    return h @ p["A"].T, c


def backward(p, mode, c, dM, dh_branch=None):
    """Gradients of all parameters given ``dL/dM`` (and optional extra ``dL/dh_branch``)."""
    g = {}
    h = c["h_fused"]
    g["A"] = dM.T @ h
    dh = dM @ p["A"]
    d = c["d"]
    h_mv, h_res, h_ifr = c["h"]
    mode = FusionMode(mode)
    if mode is FusionMode.GATED:
        g2, h_mr = c["g2"], c["h_mr"]
        dz2 = dh * (h_mr - h_ifr) * g2 * (1 - g2)
        g["W_tri"] = dz2.T @ c["u2"]
        g["g_tri"] = dz2.sum(axis=0)
        du2 = dz2 @ p["W_tri"]
        dh_mr = dh * g2 + du2[:, :d]
        dh_ifr = dh * (1 - g2) + du2[:, d:]
        g1 = c["g1"]
        dz1 = dh_mr * (h_mv - h_res) * g1 * (1 - g1)
        g["W_mr"] = dz1.T @ c["u1"]
        g["g_mr"] = dz1.sum(axis=0)
        du1 = dz1 @ p["W_mr"]
        dhs = [dh_mr * g1 + du1[:, :d], dh_mr * (1 - g1) + du1[:, d:], dh_ifr]
    elif mode is FusionMode.CONCAT:
        g["W_cat"] = dh.T @ c["u"]
        g["b_cat"] = dh.sum(axis=0)
        du = dh @ p["W_cat"]
        dhs = [du[:, :d], du[:, d:2 * d], du[:, 2 * d:]]
    elif mode is FusionMode.WEIGHTED_SUM:
        w = c["w"]
        dw = np.array([np.sum(dh * x) for x in (h_mv, h_res, h_ifr)])
        g["logits"] = w * (dw - np.dot(w, dw))
        dhs = [w[0] * dh, w[1] * dh, w[2] * dh]
    else:
        a = c["a"]
        g["W2"] = dh.T @ a
        g["b2"] = dh.sum(axis=0)
        dz = (dh @ p["W2"]) * (1 - a * a)
        g["W1"] = dz.T @ c["u"]
        g["b1"] = dz.sum(axis=0)
        du = dz @ p["W1"]
        dhs = [du[:, :d], du[:, d:2 * d], du[:, 2 * d:]]
    for i, (name, X) in enumerate(zip(BRANCHES, c["X"])):
        dhi = dhs[i] if dh_branch is None else dhs[i] + dh_branch[i]
        g[f"P_{name}"] = dhi.T @ X
        g[f"b_{name}"] = dhi.sum(axis=0)
    return g


def _objective(config, M, V, log_tau):
    batch = al.AlignmentBatch(M, V, config.lam_cos)
    if config.loss == "infonce":
        return al.align_loss(batch, log_tau)
    if config.loss == "mse":
        return al.mse_loss(batch)
    return al.hybrid_loss(batch, log_tau, config.mse_weight)


def model_loss(p, config: TrainConfig, inputs, V):
    """Scalar training loss and gradients for every parameter in ``p``."""
    loss, grads, _ = _loss_grads(p, config, inputs, V)
    return loss, grads


def _loss_grads(p, config, inputs, V):
    log_tau = float(p["log_tau"])
    M, cache = forward(p, config.fusion, *inputs)
    if not np.isfinite(M).all():
        return float("nan"), None, M
    loss, lg = _objective(config, M, V, log_tau)
    dtau = float(lg.get("log_tau", 0.0))
    dh_branch = None
    extra = {}
    if config.branch_heads:
        dh_branch = []
        for name, hb in zip(BRANCHES, cache["h"]):
            Mb = hb @ p[f"A_{name}"].T
            lb, gb = _objective(config, Mb, V, log_tau)
            loss += lb
            dtau += float(gb.get("log_tau", 0.0))
            extra[f"A_{name}"] = gb["M"].T @ hb
            dh_branch.append(gb["M"] @ p[f"A_{name}"])
    grads = backward(p, config.fusion, cache, lg["M"], dh_branch)
    grads.update(extra)
    grads["log_tau"] = np.array(dtau)
    return loss, grads, M


@dataclass
class Stage1Model:
    config: TrainConfig
    params: dict

    def embed(self, data: MotionDataset, idx=None) -> np.ndarray:
        return forward(self.params, self.config.fusion, *data.inputs(idx))[0]

    def fused(self, data: MotionDataset, idx=None):
        """Fused embeddings with gate activations (gated mode only)."""
        _, c = forward(self.params, self.config.fusion, *data.inputs(idx))
        if "g1" not in c:
            raise InputError("gate activations exist only for gated fusion")
        return [FusedEmbedding(h, g1, g2) for h, g1, g2 in zip(c["h_fused"], c["g1"], c["g2"])]

    @property
    def tau(self) -> float:
        return float(np.exp(self.params["log_tau"]))


def fit_stage1(config: TrainConfig, data: MotionDataset):
    """Train and return ``(model, history)``; deterministic for a fixed seed."""
    config.validate()
    if config.d_v and config.d_v != data.d_v:
        raise InputError(f"config d_v={config.d_v} but the data has d_v={data.d_v}")
    if config.B > len(data):
        raise InputError(f"batch size {config.B} exceeds dataset size {len(data)}")
    dims = (data.X_mv.shape[1], data.X_res.shape[1], data.X_ifr.shape[1], data.d_v)
    p = init_params(config, dims)
    vel = {k: np.zeros_like(v) for k, v in p.items()}
    rng = np.random.default_rng([config.seed, 1])
    hist = al.TrainHistory()
    order = np.array([], dtype=int)
    for step in range(config.steps):
        if order.size < config.B:
            order = np.concatenate([order, rng.permutation(len(data))])
        idx, order = order[:config.B], order[config.B:]
        V = data.V[idx]
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grads, M = _loss_grads(p, config, data.inputs(idx), V)
            finite = np.isfinite(loss) and all(np.isfinite(g).all() for g in grads.values())
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())) if finite else np.inf
        if not (finite and np.isfinite(norm)):
            raise DivergenceError(step, loss)
        hist.append(loss, float(np.mean(al.cosine_similarity(M, V))), float(np.exp(p["log_tau"])))
        scale = config.clip / norm if config.clip and norm > config.clip else 1.0
        lr = learning_rate(config, step)
        for k in p:
            vel[k] = config.momentum * vel[k] + scale * grads[k]
            p[k] = p[k] - lr * vel[k]
    return Stage1Model(config, p), hist


def learning_rate(config: TrainConfig, step: int) -> float:
    if config.schedule == "constant":
        return config.lr
    return 0.5 * config.lr * (1.0 + np.cos(np.pi * step / config.steps))


def train_stage1(config: TrainConfig, data: MotionDataset) -> al.TrainHistory:
    return fit_stage1(config, data)[1]


def mean_cosine(model: Stage1Model, data: MotionDataset) -> float:
    return float(np.mean(al.cosine_similarity(model.embed(data), data.V)))


def between_class_separation(E, labels) -> float:
    """Mean angle in degrees over all embedding pairs with different labels."""
    U = E / np.linalg.norm(E, axis=1, keepdims=True)
    ang = np.degrees(np.arccos(np.clip(U @ U.T, -1.0, 1.0)))
    diff = labels[:, None] != labels[None, :]
    return float(ang[diff].mean())


def smoothed(values, window=50) -> np.ndarray:
    """Means of consecutive non-overlapping windows."""
    v = np.asarray(values, dtype=np.float64)
    n = len(v) // window
    return v[:n * window].reshape(n, window).mean(axis=1)


def gate_rows(model: Stage1Model, data: MotionDataset):
    """Per-class mean effective branch weights of a gated model."""
    names = [data.label_names[i] for i in data.labels]
    return gate_report(zip(model.fused(data), names))
