import numpy as np
import pytest

from coxthin.pattern import Domain, make_rng


@pytest.fixture
def rng():
    return make_rng(20240611)


@pytest.fixture
def unit():
    return Domain.unit_square()


def random_points(rng, n, dom=None, min_sep=1e-3):
    """Uniform points with a minimum separation, so covariance matrices stay well conditioned."""
    dom = Domain.unit_square() if dom is None else dom
    pts = []
    while len(pts) < n:
        x = dom.uniform(rng, 1)[0]
        if all(np.linalg.norm(x - q) > min_sep for q in pts):
            pts.append(x)
    return np.array(pts).reshape(n, dom.d)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
