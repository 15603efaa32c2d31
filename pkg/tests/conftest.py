"""Acceptance bookkeeping: one PASS/FAIL line per criterion after the run.

Tests tagged ``@pytest.mark.criterion(k)`` may call the ``criterion_note``
fixture to attach a short result line.  A criterion split over several
tests passes only if every part passes; an expected failure counts as FAIL.
"""

import pytest

_OUTCOMES: dict[int, list[bool]] = {}
_NOTES: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k): acceptance criterion number k")


@pytest.fixture
def criterion_note(request):
    marker = request.node.get_closest_marker("criterion")
    k = marker.args[0] if marker else 0

    def note(text: str) -> None:
        _NOTES.setdefault(k, []).append(text)

    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        passed = rep.passed and not hasattr(rep, "wasxfail")
        _OUTCOMES.setdefault(marker.args[0], []).append(passed)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_OUTCOMES):
        status = "PASS" if all(_OUTCOMES[k]) else "FAIL"
        detail = "; ".join(_NOTES.get(k, []))
        terminalreporter.write_line(f"CRITERION {k}: {status}" + (f" ({detail})" if detail else ""))
