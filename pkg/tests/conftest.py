"""Shared pytest wiring: per-criterion verdict lines for acceptance tests."""

import pytest

_verdicts: list[tuple[str, bool, float]] = []


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "acceptance(label): tag a test as one acceptance criterion; its verdict"
        " is echoed in the terminal summary",
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        _verdicts.append((marker.args[0], report.passed, report.duration))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, duration in _verdicts:
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{verdict}  {label}  [{duration:.2f}s]")
