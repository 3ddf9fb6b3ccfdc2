"""Collects the acceptance summary lines and prints them after the run."""

import pytest

_LINES: list[str] = []


@pytest.fixture
def acceptance_record():
    return _LINES.append


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
