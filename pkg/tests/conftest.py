import numpy as np
import pytest

from predictive_cacc import presets


@pytest.fixture(scope="session")
def vehicles():
    return presets.table_vehicles()


@pytest.fixture(scope="session")
def gains():
    return presets.table_gains()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record (and print) one acceptance verdict line; returns the verdict for asserting."""

    def record(number, title, ok, detail):
        line = f"AC{number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
