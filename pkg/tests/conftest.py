from pathlib import Path

import pytest

from gridshield.grid import load_case

ROOT = Path(__file__).resolve().parent.parent
CASES = ROOT / "cases"
DATA = Path(__file__).resolve().parent / "data"


def read_case(name):
    return load_case((CASES / name).read_text())


@pytest.fixture
def five_bus():
    return read_case("5bus.json")


@pytest.fixture
def pmu_case():
    return read_case("pmu7.json")


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
