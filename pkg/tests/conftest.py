"""Collects the acceptance verdicts and prints them after the run."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

VERDICTS = {}


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        ok, detail = VERDICTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
