import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_criteria = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        number, title = marker.args
        _criteria.append((number, title, report.outcome, item.name))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    grouped = {}
    for number, title, outcome, name in _criteria:
        entry = grouped.setdefault(number, [title, True, []])
        entry[1] = entry[1] and outcome == "passed"
        entry[2].append(name)
    for number in sorted(grouped):
        title, ok, names = grouped[number]
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(
            f"[{status}] criterion {number:>2}: {title} ({len(names)} case(s))")
