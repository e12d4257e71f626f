import numpy as np
import pytest

from battdispatch.electrochem import default_battery


@pytest.fixture(scope="session")
def params():
    return default_battery()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# -- acceptance reporting ----------------------------------------------------

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records a PASS/FAIL line and asserts ``ok``."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
