"""Shared registry so acceptance pass/fail lines survive pytest's capture
and get echoed in the terminal summary."""

import time
from contextlib import contextmanager

LINES: list[str] = []


@contextmanager
def criterion(num: int, name: str, budget_s: float):
    t0 = time.perf_counter()
    try:
        yield
    except BaseException:
        elapsed = time.perf_counter() - t0
        line = f"criterion {num:2d} ({name}): FAIL after {elapsed:.1f}s"
        LINES.append(line)
        print(line)
        raise
    elapsed = time.perf_counter() - t0
    verdict = "PASS" if elapsed < budget_s else "FAIL (over budget)"
    line = (
        f"criterion {num:2d} ({name}): {verdict} "
        f"in {elapsed:.1f}s (budget {budget_s:.0f}s)"
    )
    LINES.append(line)
    print(line)
    assert elapsed < budget_s, f"runtime {elapsed:.1f}s exceeds budget {budget_s:.0f}s"
