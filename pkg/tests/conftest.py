"""Collects the one-line verdicts recorded by the acceptance tests."""

import pytest


@pytest.fixture
def verdict(record_property):
    def record(text):
        record_property("verdict", text)
    return record


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call":
                continue
            for key, text in rep.user_properties:
                if key == "verdict":
                    lines.append((rep.nodeid, f"{'PASS' if rep.passed else 'FAIL'}  {text}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
