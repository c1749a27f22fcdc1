"""Motion-space alignment objectives with hand-derived gradients.

Every loss returns ``(loss, grads)`` where ``grads`` maps ``"M"``, ``"V"`` and,
when the loss depends on the temperature, ``"log_tau"`` to arrays of matching
shape. The temperature is always handled as ``log tau`` so updates keep it
positive.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .frames import FrameBuffer

DEFAULT_LAMBDA_COS = 0.1
DEFAULT_MSE_WEIGHT = 0.5


@dataclass
class AlignmentHead:
    proj: np.ndarray  # (d_v, d)
    log_tau: float = float(np.log(0.1))

    def __post_init__(self):
        self.proj = np.asarray(self.proj, dtype=np.float64)
        if not np.isfinite(self.proj).all():
            raise InputError("alignment head projection must be finite")

    @property
    def tau(self) -> float:
        return float(np.exp(self.log_tau))

    def __call__(self, h):
        return np.asarray(h, dtype=np.float64) @ self.proj.T


@dataclass
class AlignmentBatch:
    M: np.ndarray
    V: np.ndarray
    lam_cos: float = DEFAULT_LAMBDA_COS

    def __post_init__(self):
        self.M = np.atleast_2d(np.asarray(self.M, dtype=np.float64))
        self.V = np.atleast_2d(np.asarray(self.V, dtype=np.float64))
        if self.M.shape != self.V.shape:
            raise InputError(f"M {self.M.shape} and V {self.V.shape} must have the same shape")
        if not (np.isfinite(self.M).all() and np.isfinite(self.V).all()):
            raise InputError("batch rows must be finite")
        if self.lam_cos < 0:
            raise InputError("lam_cos must be nonnegative")

    @property
    def B(self) -> int:
        return self.M.shape[0]


@dataclass
class TrainHistory:
    loss: list = field(default_factory=list)
    mean_cosine: list = field(default_factory=list)
    tau: list = field(default_factory=list)

    def append(self, loss, mean_cosine, tau):
        self.loss.append(float(loss))
        self.mean_cosine.append(float(mean_cosine))
        self.tau.append(float(tau))

    def __len__(self):
        return len(self.loss)

    def to_csv(self) -> str:
        lines = ["step,loss,mean_cosine,tau"]
        for i, (l, c, t) in enumerate(zip(self.loss, self.mean_cosine, self.tau)):
            lines.append(f"{i},{l!r},{c!r},{t!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "TrainHistory":
        rows = [r for r in text.strip().splitlines()]
        if not rows or rows[0] != "step,loss,mean_cosine,tau":
            raise InputError("history CSV must start with 'step,loss,mean_cosine,tau'")
        h = cls()
        for r in rows[1:]:
            _, l, c, t = r.split(",")
            h.append(float(l), float(c), float(t))
        return h


def _unit_rows(X):
    n = np.linalg.norm(X, axis=1)
    if np.any(n == 0):
        raise InputError(f"zero-norm row(s) {np.flatnonzero(n == 0).tolist()}: cosine undefined")
    return X / n[:, None], n


def _unit_backward(dU, U, n):
    # gradient of x / |x| pulled back through the normalisation
    return (dU - np.sum(dU * U, axis=1, keepdims=True) * U) / n[:, None]


def _logsumexp(Z, axis):
    zmax = Z.max(axis=axis, keepdims=True)
    return zmax + np.log(np.exp(Z - zmax).sum(axis=axis, keepdims=True))


def cosine_similarity(M, V) -> np.ndarray:
    """Row-wise cosine between paired rows."""
    Mu, _ = _unit_rows(np.atleast_2d(M))
    Vu, _ = _unit_rows(np.atleast_2d(V))
    return np.sum(Mu * Vu, axis=1)


def infonce_loss(batch: AlignmentBatch, log_tau: float):
    """Symmetric (motion->visual and visual->motion) InfoNCE on cosine logits."""
    B = batch.B
    if B < 2:
        raise InputError("InfoNCE needs a batch of at least 2 (in-batch negatives)")
    Mu, nM = _unit_rows(batch.M)
    Vu, nV = _unit_rows(batch.V)
    tau = np.exp(log_tau)
    S = Mu @ Vu.T
    Z = S / tau
    lse_r = _logsumexp(Z, 1)
    lse_c = _logsumexp(Z, 0)
    diag = np.diag(Z)
    loss = (np.sum(lse_r[:, 0] - diag) + np.sum(lse_c[0] - diag)) / (2 * B)

    eye = np.eye(B)
    dZ = (np.exp(Z - lse_r) - eye + np.exp(Z - lse_c) - eye) / (2 * B)
    dS = dZ / tau
    grads = {
        "M": _unit_backward(dS @ Vu, Mu, nM),
        "V": _unit_backward(dS.T @ Mu, Vu, nV),
        "log_tau": np.array(-np.sum(dZ * Z)),
    }
    return float(loss), grads


def cosine_loss(batch: AlignmentBatch):
    """``mean_k (1 - cos(m_k, v_k))`` without the ``lam_cos`` weight."""
    Mu, nM = _unit_rows(batch.M)
    Vu, nV = _unit_rows(batch.V)
    B = batch.B
    cos = np.sum(Mu * Vu, axis=1)
    loss = float(np.mean(1.0 - cos))
    grads = {
        "M": _unit_backward(-Vu / B, Mu, nM),
        "V": _unit_backward(-Mu / B, Vu, nV),
    }
    return loss, grads


def _log_tau(head):
    return head.log_tau if isinstance(head, AlignmentHead) else float(head)


def align_loss(batch: AlignmentBatch, head):
    """InfoNCE plus ``lam_cos`` times the paired-cosine regulariser.

    ``head`` is an :class:`AlignmentHead` or a bare ``log tau`` value.
    """
    loss, grads = infonce_loss(batch, _log_tau(head))
    if batch.lam_cos:
        c_loss, c_grads = cosine_loss(batch)
        loss += batch.lam_cos * c_loss
        grads["M"] = grads["M"] + batch.lam_cos * c_grads["M"]
        grads["V"] = grads["V"] + batch.lam_cos * c_grads["V"]
    return loss, grads


def mse_loss(batch: AlignmentBatch):
    D = batch.M - batch.V
    B = batch.B
    loss = float(np.sum(D * D) / B)
    return loss, {"M": 2.0 * D / B, "V": -2.0 * D / B}


def hybrid_loss(batch: AlignmentBatch, head, weight: float = DEFAULT_MSE_WEIGHT):
    loss, grads = align_loss(batch, head)
    if weight:
        m_loss, m_grads = mse_loss(batch)
        loss += weight * m_loss
        grads["M"] = grads["M"] + weight * m_grads["M"]
        grads["V"] = grads["V"] + weight * m_grads["V"]
    return loss, grads


def grad_check(loss_fn, params: dict, eps: float = 1e-5, return_detail: bool = False):
    """Largest relative error between analytic and central-difference gradients.

    ``loss_fn(params) -> (loss, grads)`` with ``grads`` keyed like ``params``;
    keys absent from ``grads`` are taken to have zero gradient. The error for
    each entry is ``|a - f| / max(1, |a|, |f|)``.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise InputError(f"eps {eps} outside [1e-7, 1e-3]")
    base = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    loss0, analytic = loss_fn({k: v.copy() for k, v in base.items()})
    if not np.isfinite(loss0):
        raise InputError("loss is not finite at the check point")
    worst = 0.0
    detail = {}
    for name, value in base.items():
        a_all = np.broadcast_to(np.asarray(analytic.get(name, np.zeros_like(value)), dtype=np.float64),
                                value.shape)
        flat = value.reshape(-1)
        errs = np.zeros(flat.size)
        for i in range(flat.size):
            probe = {k: v.copy() for k, v in base.items()}
            p = probe[name].reshape(-1)
            p[i] = flat[i] + eps
            probe[name] = p.reshape(value.shape)
            fp = loss_fn(probe)[0]
            p[i] = flat[i] - eps
            probe[name] = p.reshape(value.shape)
            fm = loss_fn(probe)[0]
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise InputError(f"loss not finite while probing {name}[{i}]")
            f = (fp - fm) / (2 * eps)
            a = a_all.reshape(-1)[i]
            errs[i] = abs(a - f) / max(1.0, abs(a), abs(f))
        detail[name] = float(errs.max()) if errs.size else 0.0
        worst = max(worst, detail[name])
    return (worst, detail) if return_detail else worst


def visual_delta(feat_next, feat_prev) -> np.ndarray:
    """Mean over grid positions of the feature change between two anchors."""
    a = np.asarray(feat_next, dtype=np.float64)
    b = np.asarray(feat_prev, dtype=np.float64)
    if a.shape != b.shape:
        raise InputError(f"feature grids differ in shape: {a.shape} vs {b.shape}")
    return (a - b).reshape(-1, a.shape[-1]).mean(axis=0)


HOST_SCALES = (8, 16)


def host_features(frame: FrameBuffer, scales=HOST_SCALES) -> np.ndarray:
    """Frozen stand-in for host visual tokens.

    Tokens sit on the finest cell grid. At each scale a cell contributes its
    channel means and those means weighted by the cell's normalised centre
    coordinates in [-1, 1]; a token concatenates its own cell with every
    coarser parent cell. Output shape is ``(rows, cols, 3 * C * len(scales))``.
    """
    x = frame.data.astype(np.float64) / 255.0
    H, W, C = x.shape
    scales = sorted(scales)
    fine = scales[0]
    for s in scales:
        if H % s or W % s or s % fine:
            raise InputError(f"host feature scale {s} incompatible with {W}x{H}")
    parts = []
    for s in scales:
        gh, gw = H // s, W // s
        mean = x.reshape(gh, s, gw, s, C).mean(axis=(1, 3))
        cy = (np.arange(gh) + 0.5) * s / H * 2 - 1
        cx = (np.arange(gw) + 0.5) * s / W * 2 - 1
        tok = np.concatenate([mean, mean * cx[None, :, None], mean * cy[:, None, None]], axis=-1)
        rep = s // fine
        parts.append(np.repeat(np.repeat(tok, rep, axis=0), rep, axis=1))
    return np.concatenate(parts, axis=-1)
