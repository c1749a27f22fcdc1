"""Anchor selection, interval partitioning and token-budget accounting.

Frame indices are 1-based throughout. Intervals are half-open ``[start, stop)``
spans; under the default ``bracket`` convention the last interval runs to the
final frame, so its ``stop`` is ``T + 1``.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import InputError

ANCHOR_RULES = ("center", "endpoint")
CONVENTIONS = ("bracket", "between")


@dataclass(frozen=True)
class Interval:
    k: int
    start: int
    stop: int
    start_anchor: int
    end_anchor: int | None  # None for the tail interval of a bracket layout

    @property
    def frames(self) -> range:
        return range(self.start, self.stop)

    @property
    def span(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True)
class Decomposition:
    T: int
    anchors: tuple
    intervals: tuple
    convention: str = "bracket"

    @property
    def n_anchors(self) -> int:
        return len(self.anchors)

    @property
    def K(self) -> int:
        return len(self.intervals)


@dataclass(frozen=True)
class TokenBudget:
    anchor_tokens: int
    motion_tokens: int
    text_overhead: int
    total: int

    def as_dict(self) -> dict:
        return {
            "anchor_tokens": self.anchor_tokens,
            "motion_tokens": self.motion_tokens,
            "text_overhead": self.text_overhead,
            "total": self.total,
        }


def select_anchors(T: int, n_anchors: int, rule: str = "center") -> list[int]:
    """Uniform anchor positions in ``[1, T]``.

    ``center`` takes the middle frame of each of ``n_anchors`` equal bins;
    ``endpoint`` spreads anchors from frame 1 to frame T inclusive.
    """
    if n_anchors < 1:
        raise InputError(f"need at least one anchor, got {n_anchors}")
    if n_anchors > T:
        raise InputError(f"cannot place {n_anchors} anchors in {T} frames")
    if rule == "center":
        anchors = [((2 * i - 1) * T) // (2 * n_anchors) + 1 for i in range(1, n_anchors + 1)]
    elif rule == "endpoint":
        if n_anchors == 1:
            anchors = [1]
        else:
            den = 2 * (n_anchors - 1)
            anchors = [1 + (2 * (i - 1) * (T - 1) + n_anchors - 1) // den for i in range(1, n_anchors + 1)]
    else:
        raise InputError(f"unknown anchor rule {rule!r}; expected one of {ANCHOR_RULES}")
    anchors = [min(max(a, 1), T) for a in anchors]
    for a, b in zip(anchors, anchors[1:]):
        if b <= a:
            raise InputError(f"anchor collision at frame {a} (T={T}, N_a={n_anchors})")
    return anchors


def partition_intervals(anchors, T: int, convention: str = "bracket") -> list[Interval]:
    anchors = list(anchors)
    if not anchors:
        raise InputError("no anchors to partition")
    if anchors[0] < 1 or anchors[-1] > T:
        raise InputError(f"anchors must lie in [1, {T}]")
    if any(b <= a for a, b in zip(anchors, anchors[1:])):
        raise InputError("anchors must be strictly increasing")
    out = []
    for k, (a, b) in enumerate(zip(anchors, anchors[1:])):
        out.append(Interval(k, a, b, k, k + 1))
    if convention == "bracket":
        out.append(Interval(len(anchors) - 1, anchors[-1], T + 1, len(anchors) - 1, None))
    elif convention != "between":
        raise InputError(f"unknown interval convention {convention!r}; expected one of {CONVENTIONS}")
    return out


def decompose(T: int, n_anchors: int, rule: str = "center", convention: str = "bracket") -> Decomposition:
    anchors = select_anchors(T, n_anchors, rule)
    intervals = partition_intervals(anchors, T, convention)
    return Decomposition(T, tuple(anchors), tuple(intervals), convention)


def token_budget(n_anchors: int, tokens_per_frame: int, n_intervals: int,
                 tokens_per_interval: int, text_overhead: int = 0) -> TokenBudget:
    args = (n_anchors, tokens_per_frame, n_intervals, tokens_per_interval, text_overhead)
    if any(int(a) != a or a < 0 for a in args):
        raise InputError(f"token budget operands must be nonnegative integers, got {args}")
    anchor = int(n_anchors) * int(tokens_per_frame)
    motion = int(n_intervals) * int(tokens_per_interval)
    return TokenBudget(anchor, motion, int(text_overhead), anchor + motion + int(text_overhead))
