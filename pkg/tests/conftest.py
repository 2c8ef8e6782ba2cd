from __future__ import annotations

import pytest

_results: list[tuple[str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    # a broken fixture never reaches the call phase
    if call.when != "call" and not (call.when == "setup" and call.excinfo is not None):
        return
    outcome = "PASS" if call.excinfo is None else "FAIL"
    _results.append((outcome, marker.args[0]))


@pytest.hookimpl(trylast=True)
def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for outcome, name in _results:
        terminalreporter.write_line(f"{outcome}  {name}")
