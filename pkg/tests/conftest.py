import numpy as np
import pytest

from nnkam.harness import CRITERIA

# filled by tests/test_acceptance.py: criterion id -> (status, detail)
ACCEPTANCE: dict = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def acceptance_ledger():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        status, detail = ACCEPTANCE.get(k, ("NOT RUN", ""))
        terminalreporter.write_line(f"criterion {k:2d} {status:7s} {CRITERIA[k]}: {detail}")
