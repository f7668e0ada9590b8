import time
from contextlib import contextmanager

import pytest

_ACCEPTANCE: dict[int, tuple[str, bool, float, str]] = {}


@contextmanager
def _record(number: int, title: str):
    t0 = time.perf_counter()
    note = {"text": ""}
    try:
        yield note
    except BaseException:
        _ACCEPTANCE[number] = (title, False, time.perf_counter() - t0, note["text"])
        raise
    _ACCEPTANCE[number] = (title, True, time.perf_counter() - t0, note["text"])


@pytest.fixture
def criterion():
    """Context manager recording pass/fail and wall time of one acceptance criterion."""
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok, elapsed, text = _ACCEPTANCE[number]
        status = "PASS" if ok else "FAIL"
        line = f"[{status}] {number:2d}. {title} ({elapsed:.2f} s)"
        if text:
            line += f"  {text}"
        terminalreporter.write_line(line)
