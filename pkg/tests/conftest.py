"""Collects acceptance outcomes and prints one PASS/FAIL line per check."""

import pytest

_RESULTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, title = mark.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = ", ".join(f"{k}={v}" for k, v in report.user_properties)
        _RESULTS[number] = (title, report.outcome, report.duration, detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance")
    for number in sorted(_RESULTS):
        title, outcome, duration, detail = _RESULTS[number]
        status = "PASS" if outcome == "passed" else "FAIL"
        extra = f"; {detail}" if detail else ""
        terminalreporter.write_line(f"{status}  [{number}] {title} ({duration:.1f}s{extra})")
