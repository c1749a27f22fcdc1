"""Collects one pass/fail line per acceptance criterion for the terminal summary."""
import time
from contextlib import contextmanager

RESULTS = []


@contextmanager
def criterion(number, title, budget_s):
    """Times the block, records the outcome and enforces the runtime budget."""
    t0 = time.perf_counter()
    try:
        yield
    except BaseException as exc:
        RESULTS.append((number, "FAIL", title, time.perf_counter() - t0, budget_s, type(exc).__name__))
        raise
    elapsed = time.perf_counter() - t0
    ok = elapsed < budget_s
    RESULTS.append((number, "PASS" if ok else "FAIL", title, elapsed, budget_s, "" if ok else "over budget"))
    assert ok, f"criterion {number} took {elapsed:.3f}s, budget {budget_s}s"


def lines():
    out = []
    for number, status, title, elapsed, budget, note in sorted(RESULTS):
        tail = f" ({note})" if note else ""
        out.append(f"{status} criterion {number:>2}: {title} [{elapsed * 1000:.1f} ms / {budget * 1000:g} ms]{tail}")
    return out
