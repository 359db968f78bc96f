import re
from pathlib import Path

import pytest

from appliance_sim.bench.episodes import Corpus
from appliance_sim.spec import load_spec_file

FIXTURES = Path(__file__).parent / "fixtures"

_criteria: dict[str, list[str]] = {}


@pytest.fixture(scope="session")
def corpus():
    return Corpus.load()


@pytest.fixture(scope="session")
def specs(corpus):
    return corpus.specs


@pytest.fixture
def fixture_spec():
    return lambda name: load_spec_file(FIXTURES / name)


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    if report.when == "call" or report.outcome != "passed":
        _criteria.setdefault(m.group(1), []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        outcomes = _criteria[number]
        verdict = "PASS" if all(o == "passed" for o in outcomes) else "FAIL"
        terminalreporter.write_line(f"criterion {int(number)}: {verdict}")
