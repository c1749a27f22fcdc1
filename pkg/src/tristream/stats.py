"""Binomial accuracy and Wilson score intervals."""
from dataclasses import dataclass
from math import sqrt

from .errors import InputError

# two-sided standard normal quantiles, fixed for reproducibility
Z_VALUES = {
    0.90: 1.6448536269514722,
    0.95: 1.959963984540054,
    0.99: 2.5758293035489004,
}


def _check(correct, total):
    if total < 1:
        raise InputError("total must be at least 1")
    if not 0 <= correct <= total:
        raise InputError(f"correct={correct} outside [0, {total}]")


@dataclass(frozen=True)
class BinomialResult:
    correct: int
    total: int
    confidence: float = 0.95

    def __post_init__(self):
        _check(self.correct, self.total)
        if not 0 < self.confidence < 1:
            raise InputError(f"confidence {self.confidence} outside (0, 1)")

    @property
    def p_hat(self) -> float:
        return self.correct / self.total


def wilson_interval(correct, total: int | None = None, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for ``correct/total`` as proportions in [0, 1].

    Accepts either the counts directly or a :class:`BinomialResult`.
    """
    if isinstance(correct, BinomialResult):
        correct, total, confidence = correct.correct, correct.total, correct.confidence
    if total is None:
        raise InputError("total is required")
    _check(correct, total)
    try:
        z = Z_VALUES[round(confidence, 6)]
    except KeyError:
        raise InputError(f"unsupported confidence {confidence}; use one of {sorted(Z_VALUES)}") from None
    n = total
    p = correct / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    margin = (z / denom) * sqrt(p * (1 - p) / n + z2 / (4 * n * n))
    lo = 0.0 if correct == 0 else max(0.0, center - margin)
    hi = 1.0 if correct == total else min(1.0, center + margin)
    return lo, hi


def accuracy(correct: int, total: int) -> float:
    """Percent correct, rounded to two decimals."""
    _check(correct, total)
    return round(100.0 * correct / total, 2)
