import numpy as np
import pytest

from dcloss._accel import HAS_NUMBA

BACKENDS = ["numpy"] + (["numba"] if HAS_NUMBA else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_simplex(rng, L, floor=0.0):
    """Dirichlet(1) draw; ``floor`` keeps entries away from zero."""
    p = rng.dirichlet(np.ones(L)) + floor
    return p / p.sum()


ACCEPTANCE_LINES = []


@pytest.fixture
def record():
    """Log one acceptance line; the summary is printed after the run."""

    def _record(criterion, passed, detail):
        ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split("AC", 1)[1].split(" ", 1)[0])):
            terminalreporter.write_line(line)
