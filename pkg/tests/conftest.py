"""Collects per-criterion verdicts from tests marked ``criterion(n)``."""

import pytest

_VERDICTS = {}
_DETAILS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    n = marker.args[0]
    _VERDICTS[n] = _VERDICTS.get(n, True) and report.passed
    for name, value in item.user_properties:
        if name == "detail":
            _DETAILS.setdefault(n, []).append(f"{item.name}: {value}")


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        terminalreporter.write_line(f"criterion {n}: {'PASS' if _VERDICTS[n] else 'FAIL'}")
        for line in _DETAILS.get(n, []):
            terminalreporter.write_line(f"    {line}")
