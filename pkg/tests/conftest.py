from __future__ import annotations

import pytest

from htformal.benchmarks import universal
from htformal.techmodel import TechnologyParams, default_variation, sample_variations


@pytest.fixture(scope="session")
def params() -> TechnologyParams:
    return TechnologyParams.default()


@pytest.fixture(scope="session")
def s27():
    return universal("s27")


@pytest.fixture(scope="session")
def samples(params):
    """Nominal plus 100 draws of the default 5% variation."""
    return [params] + sample_variations(default_variation(params))


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
