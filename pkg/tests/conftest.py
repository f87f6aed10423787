import numpy as np
import pytest

from skewrd.dgspace import DgSpace
from skewrd.mesh import build_interval_mesh, build_triangular_mesh


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=[1, 2], ids=["k1", "k2"])
def degree(request):
    return request.param


@pytest.fixture
def line_space(degree):
    return DgSpace(build_interval_mesh(0.0, 1.0, 0.125), degree)


@pytest.fixture
def tri_space(degree):
    return DgSpace(build_triangular_mesh((-1.0, 1.0), (-1.0, 1.0), 3), degree)


@pytest.fixture(params=["line", "tri"])
def any_space(request, degree):
    if request.param == "line":
        return DgSpace(build_interval_mesh(-1.0, 2.0, 0.25), degree)
    return DgSpace(build_triangular_mesh((0.0, 2.0), (-1.0, 0.5), 3), degree)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """``criterion(n, ok, detail)`` logs one pass/fail line and asserts."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(n, ok, detail):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines[n] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
