import os
import sys
import time
from contextlib import contextmanager

from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

CRITERIA: list[str] = []


@contextmanager
def criterion(number: int, title: str, limit: float):
    """Time one acceptance criterion and record a pass/fail line for it."""
    detail: dict = {}
    start = time.perf_counter()
    try:
        yield detail
    except BaseException as exc:
        took = time.perf_counter() - start
        _record(number, title, False, took, limit, detail, f"{type(exc).__name__}: {exc}")
        raise
    took = time.perf_counter() - start
    fast = took < limit
    _record(number, title, fast, took, limit, detail, "" if fast else "over time limit")
    assert fast, f"criterion {number} took {took:.2f}s (limit {limit}s)"


def _record(number, title, ok, took, limit, detail, why):
    extra = ", ".join(f"{k}={v}" for k, v in detail.items())
    line = (f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} "
            f"[{took:.2f}s / {limit:g}s]" + (f" {extra}" if extra else "")
            + (f" ({why.splitlines()[0][:160]})" if why else ""))
    CRITERIA.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
