"""Collects acceptance results and prints one PASS/FAIL line per criterion."""
import pytest

_criteria: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number = marker.args[0]
    detail = dict(item.user_properties).get("detail", "")
    if report.when == "call":
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        _criteria[number] = (status, detail)
    elif report.failed:
        _criteria[number] = ("FAIL", f"{report.when} error")
    elif report.skipped and number not in _criteria:
        _criteria[number] = ("SKIP", str(report.longrepr[-1]) if report.longrepr else "")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        status, detail = _criteria[number]
        line = f"criterion {number}: {status}"
        terminalreporter.write_line(f"{line} - {detail}" if detail else line)
