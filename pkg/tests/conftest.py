"""Shared pytest wiring for the suite.

Registers the ``criterion`` marker and prints a one-line pass/fail summary
for every acceptance criterion at the end of the run.
"""

import pytest

# criterion number -> (label, passed, duration)
_RESULTS: dict[int, tuple[str, bool, float]] = {}

_EXPECTED = range(1, 8)


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(num, label): ties a test to one acceptance criterion",
    )


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    rep = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None and rep.when == "call":
        num, label = marker.args
        _RESULTS[num] = (label, rep.passed, rep.duration)
    elif marker is not None and rep.when == "setup" and rep.failed:
        num, label = marker.args
        _RESULTS[num] = (label, False, rep.duration)
    return rep


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in _EXPECTED:
        if num in _RESULTS:
            label, passed, duration = _RESULTS[num]
            verdict = "PASS" if passed else "FAIL"
            tr.write_line(f"criterion {num}: {verdict} - {label} ({duration:.2f}s)")
        else:
            tr.write_line(f"criterion {num}: NOT RUN")
