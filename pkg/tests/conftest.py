import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).resolve().parent
FIXTURES = TESTS / "fixtures"
sys.path.insert(0, str(TESTS))

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, {"title": title, "outcomes": []})
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        if call.excinfo is None:
            entry["outcomes"].append("PASS")
        elif call.excinfo.errisinstance(pytest.skip.Exception):
            entry["outcomes"].append("SKIP")
        else:
            entry["outcomes"].append("FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        outcomes = entry["outcomes"]
        if "FAIL" in outcomes:
            verdict = "FAIL"
        elif outcomes and all(o == "SKIP" for o in outcomes):
            verdict = "SKIP"
        elif outcomes:
            verdict = "PASS"
        else:
            verdict = "NOT RUN"
        terminalreporter.write_line("criterion %d: %-4s %s" % (number, verdict, entry["title"]))


@pytest.fixture(scope="session")
def pipeline():
    from cfqdep.depconvert import Pipeline

    return Pipeline.default()


@pytest.fixture
def fixtures():
    return FIXTURES
