import numpy as np
import pytest

from nhreduce import dldps, suslov

from cases import DIAG, GENERIC

_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_line():
    def record(n, ok, detail):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _run(level, inertia, steps):
    sys = suslov.build_suslov(level, inertia)
    return sys, dldps.integrate(sys, suslov.initial_pair(level, inertia), steps)


@pytest.fixture(scope="session")
def diag_full():
    return _run("full", DIAG, 200)


@pytest.fixture(scope="session")
def generic_full():
    return _run("full", GENERIC, 200)


@pytest.fixture(scope="session")
def generic_eta():
    return _run("eta", GENERIC, 200)
