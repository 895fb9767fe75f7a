import contextlib
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA = {}


class CriterionLog:
    """Collects named checks for one acceptance criterion."""

    def __init__(self, number, title):
        self.number = number
        self.title = title
        self.checks = []

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))
        return bool(ok)

    @property
    def passed(self):
        return all(ok for _, ok, _ in self.checks)


@contextlib.contextmanager
def _criterion(number, title):
    log = _CRITERIA.setdefault(number, CriterionLog(number, title))
    try:
        yield log
    except Exception as exc:
        log.check("exception", False, f"{type(exc).__name__}: {exc}")
        raise
    failed = [f"{n}: {d}" for n, ok, d in log.checks if not ok]
    for n, ok, d in log.checks:
        print(f"  [{'ok' if ok else 'FAIL'}] {n} {d}")
    assert not failed, "; ".join(failed)


@pytest.fixture
def criterion():
    return _criterion


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        log = _CRITERIA[number]
        status = "PASS" if log.passed else "FAIL"
        terminalreporter.write_line(f"criterion {number} {status}: {log.title} ({len(log.checks)} checks)")
        for name, ok, detail in log.checks:
            if not ok:
                terminalreporter.write_line(f"    failed: {name} {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
