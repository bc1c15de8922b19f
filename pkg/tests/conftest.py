import contextlib
import os
import sys

import pytest

HERE = os.path.dirname(__file__)
ROOT = os.path.dirname(HERE)
PROGRAMS = os.path.join(ROOT, "programs")
sys.path.insert(0, HERE)

_results: dict[int, tuple[str, bool]] = {}


@contextlib.contextmanager
def criterion(num: int, title: str):
    """Record a pass/fail line for an acceptance criterion."""
    try:
        yield
    except BaseException:
        _results[num] = (title, False)
        print(f"CRITERION {num}: FAIL  {title}")
        raise
    _results[num] = (title, True)
    print(f"CRITERION {num}: PASS  {title}")


@pytest.fixture
def programs_dir():
    return PROGRAMS


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_results):
        title, ok = _results[num]
        terminalreporter.write_line(f"CRITERION {num}: {'PASS' if ok else 'FAIL'}  {title}")
