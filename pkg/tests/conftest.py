"""Collects acceptance verdicts and prints them after the run."""

import pytest

VERDICTS = {}


@pytest.fixture
def verdict():
    """Record ``(criterion, passed, detail)`` for the terminal summary."""
    def record(number, passed, detail):
        VERDICTS[number] = (bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        passed, detail = VERDICTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
