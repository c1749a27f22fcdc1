"""Placeholder layouts and out-of-place scatter injection of motion tokens.

A layout reserves ``K * K_m`` sequence positions for motion tokens. Injection
builds a new sequence whose placeholder rows are the motion-token rows and
whose other rows are copied from the input; the selector matrix is kept as a
sorted position list rather than a dense one-hot matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

STRATEGIES = ("prefix", "per_anchor", "suffix", "explicit")


@dataclass(frozen=True, eq=False)
class PlaceholderLayout:
    S: int
    positions: tuple
    strategy: str = "explicit"

    def __post_init__(self):
        pos = tuple(int(p) for p in self.positions)
        if self.strategy not in STRATEGIES:
            raise InputError(f"strategy must be one of {STRATEGIES}")
        if self.S < 0:
            raise InputError("S must be nonnegative")
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise InputError("placeholder positions must be strictly increasing")
        if pos and (pos[0] < 0 or pos[-1] >= self.S):
            raise InputError(f"placeholder positions must lie in [0, {self.S})")
        object.__setattr__(self, "positions", pos)

    def __len__(self):
        return len(self.positions)

    def __eq__(self, other):
        if not isinstance(other, PlaceholderLayout):
            return NotImplemented
        return self.S == other.S and self.positions == other.positions

    __hash__ = None

    def selector(self) -> np.ndarray:
        """Dense ``S x n`` one-hot matrix; for checking only."""
        P = np.zeros((self.S, len(self.positions)))
        P[list(self.positions), np.arange(len(self.positions))] = 1.0
        return P

    def union(self, other: "PlaceholderLayout") -> "PlaceholderLayout":
        if other.S != self.S:
            raise InputError("layouts cover different sequence lengths")
        if set(self.positions) & set(other.positions):
            raise InputError("layouts overlap")
        return PlaceholderLayout(self.S, tuple(sorted(self.positions + other.positions)))


@dataclass(frozen=True, eq=False)
class EmbeddingSeq:
    """Sequence rows ``E`` with a per-row stop-gradient flag and row provenance.

    ``provenance[i]`` is ``-1`` for rows taken from the original sequence and
    ``j`` for rows written from motion-token row ``j``.
    """

    E: np.ndarray
    frozen_mask: np.ndarray | None = None
    provenance: np.ndarray | None = None

    def __post_init__(self):
        E = np.array(self.E, dtype=np.float64, copy=True)
        if E.ndim != 2:
            raise InputError(f"E must be (S, d), got shape {E.shape}")
        S = E.shape[0]
        mask = np.zeros(S, bool) if self.frozen_mask is None else np.array(self.frozen_mask, dtype=bool)
        prov = np.full(S, -1, np.int64) if self.provenance is None else np.array(self.provenance, dtype=np.int64)
        if mask.shape != (S,) or prov.shape != (S,):
            raise InputError(f"frozen_mask and provenance must have length {S}")
        for a in (E, mask, prov):
            a.flags.writeable = False
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "frozen_mask", mask)
        object.__setattr__(self, "provenance", prov)

    @property
    def S(self) -> int:
        return self.E.shape[0]

    @property
    def d(self) -> int:
        return self.E.shape[1]


def _check_spans(spans, S):
    spans = [(int(a), int(n)) for a, n in spans]
    for i, (a, n) in enumerate(spans):
        if n < 1 or a < 0 or a + n > S:
            raise InputError(f"anchor span {i} ({a}, {n}) must be nonempty and inside [0, {S})")
    for i in range(1, len(spans)):
        if spans[i][0] < spans[i - 1][0] + spans[i - 1][1]:
            raise InputError(f"anchor spans {i - 1} and {i} overlap or are out of order")
    return spans


def build_layout(strategy, anchor_token_spans, K, K_m, S) -> PlaceholderLayout:
    """Reserve ``K * K_m`` slots around the anchor token blocks.

    ``prefix`` puts every slot directly before the first block, ``suffix``
    directly after the last one, and ``per_anchor`` puts ``K_m`` slots right
    after each of the first ``K`` blocks. Spans are given in final sequence
    coordinates, so the slots must already be free.
    """
    if strategy not in STRATEGIES[:3]:
        raise InputError(f"strategy must be one of {STRATEGIES[:3]}")
    if K < 0 or K_m < 0:
        raise InputError("K and K_m must be nonnegative")
    spans = _check_spans(anchor_token_spans, S)
    n = K * K_m
    if n == 0:
        return PlaceholderLayout(S, (), strategy)
    if not spans:
        raise InputError("at least one anchor span is required")
    if strategy == "prefix":
        first = spans[0][0]
        if first < n:
            raise InputError(f"no room for {n} slots before the first anchor span at {first}")
        pos = range(first - n, first)
    elif strategy == "suffix":
        last = spans[-1][0] + spans[-1][1]
        if last + n > S:
            raise InputError(f"no room for {n} slots after the last anchor span (ends at {last}, S={S})")
        pos = range(last, last + n)
    else:
        if len(spans) not in (K, K + 1):
            raise InputError(f"per_anchor needs K or K+1 anchor spans, got {len(spans)} for K={K}")
        pos = []
        for i in range(K):
            end = spans[i][0] + spans[i][1]
            nxt = spans[i + 1][0] if i + 1 < len(spans) else S
            if end + K_m > nxt:
                raise InputError(f"no room for {K_m} slots after anchor span {i}")
            pos.extend(range(end, end + K_m))
    return PlaceholderLayout(S, tuple(pos), strategy)


def mark_placeholders(seq: EmbeddingSeq, layout: PlaceholderLayout) -> EmbeddingSeq:
    """Copy of ``seq`` with the layout's rows flagged stop-gradient."""
    if layout.S != seq.S:
        raise InputError(f"layout covers S={layout.S}, sequence has S={seq.S}")
    mask = seq.frozen_mask.copy()
    mask[list(layout.positions)] = True
    return EmbeddingSeq(seq.E, mask, seq.provenance)


def scatter_inject(seq: EmbeddingSeq, layout: PlaceholderLayout, M) -> EmbeddingSeq:
    """Out-of-place write of motion-token rows ``M`` into the placeholder rows.

    Injected rows lose their stop-gradient flag (they now carry ``M``); all
    other rows keep their flag and provenance.
    """
    M = np.asarray(M, dtype=np.float64)
    n = len(layout)
    if M.ndim != 2 or M.shape[0] != n:
        raise InputError(f"M must have {n} rows, got shape {M.shape}")
    if layout.S != seq.S:
        raise InputError(f"layout covers S={layout.S}, sequence has S={seq.S}")
    if n and M.shape[1] != seq.d:
        raise InputError(f"M rows have width {M.shape[1]}, sequence rows have {seq.d}")
    pos = np.asarray(layout.positions, dtype=np.int64)
    if n and not seq.frozen_mask[pos].all():
        raise InputError("placeholder rows must be marked frozen before injection (see mark_placeholders)")
    E = seq.E.copy()
    prov = seq.provenance.copy()
    mask = seq.frozen_mask.copy()
    if n:
        E[pos] = M
        prov[pos] = np.arange(n)
        mask[pos] = False
    return EmbeddingSeq(E, mask, prov)


def provenance_table(seq: EmbeddingSeq) -> list[tuple[int, str, bool]]:
    """``(row, source, frozen)`` with source ``"E[i]"`` or ``"M[j]"``."""
    return [(i, f"M[{j}]" if j >= 0 else f"E[{i}]", bool(f))
            for i, (j, f) in enumerate(zip(seq.provenance, seq.frozen_mask))]


def sum_of_squares(E) -> float:
    return float(np.sum(np.asarray(E) ** 2))


@dataclass
class GradFlowReport:
    grad_M: np.ndarray
    grad_out: np.ndarray
    grad_E: np.ndarray
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _fd(fn, X, eps):
    G = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        hi, lo = X.copy(), X.copy()
        hi[idx] += eps
        lo[idx] -= eps
        G[idx] = (fn(hi) - fn(lo)) / (2 * eps)
    return G


def grad_flow_check(seq: EmbeddingSeq, layout: PlaceholderLayout, M, downstream_loss=sum_of_squares,
                    eps: float = 1e-6, tol: float = 1e-6) -> GradFlowReport:
    """Finite-difference audit of where injection routes gradients.

    Checks that the loss sensitivity to ``M[j]`` equals its sensitivity to
    output row ``p_j``, that frozen placeholder rows of the input have zero
    sensitivity, and that every other input row passes its sensitivity
    through unchanged.
    """
    M = np.asarray(M, dtype=np.float64)
    out = scatter_inject(seq, layout, M)
    gM = _fd(lambda X: downstream_loss(scatter_inject(seq, layout, X).E), M, eps)
    gOut = _fd(downstream_loss, out.E.copy(), eps)
    gE = _fd(lambda X: downstream_loss(scatter_inject(EmbeddingSeq(X, seq.frozen_mask), layout, M).E),
             seq.E.copy(), eps)
    pos = list(layout.positions)
    violations = []
    for j, p in enumerate(pos):
        if not np.allclose(gM[j], gOut[p], rtol=0, atol=tol):
            violations.append(f"M[{j}] sensitivity differs from output row {p}")
        if np.any(gE[p] != 0):
            violations.append(f"overwritten row {p} still influences the loss")
    for i in range(seq.S):
        if i not in layout.positions and not np.allclose(gE[i], gOut[i], rtol=0, atol=tol):
            violations.append(f"row {i} does not pass its gradient through")
    return GradFlowReport(gM, gOut, gE, violations)
