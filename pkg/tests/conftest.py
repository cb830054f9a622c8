import pytest
from hypothesis import settings

from nholo.dconn import DMetric
from nholo.expr import Chart, parse
from nholo.lagrange import Lagrangian
from nholo.nconn import NConnection
from nholo.sampling import SplitMix64, random_points

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

CHART22 = Chart.standard(2, 2)

LAGRANGIANS = {
    "flat": "y1^2 + y2^2",
    "conformal": "exp(2*x1)*(y1^2 + y2^2)",
    "offdiagonal": "(2 + x2^2)*y1^2 + 0.6*sin(x1)*y1*y2 + (1 + x1^2)*y2^2",
}


def field(src, chart=CHART22):
    return parse(src, chart)


def make_lagrangian(name):
    return Lagrangian(CHART22, field(LAGRANGIANS[name]))


def generic_metric():
    """Non-flat d-metric on n = m = 2 with y-dependent, non-symmetric dN/dy."""
    f = field
    N = NConnection(CHART22, [[f("y1^2*x2"), f("sin(x1)*y2")], [f("x1*y1*y2"), f("y2^2 + x2")]])
    g = [[f("1 + x1^2 + y1^2"), f("0.1*y2")], [f("0.1*y2"), f("2 + sin(x2*y1)")]]
    h = [[f("1 + y2^2*x1^2"), f("0.2*x2")], [f("0.2*x2"), f("3 + cos(y1)")]]
    return DMetric(CHART22, g, h, N)


def sample(count, seed=1, lo=-1.0, hi=1.0, dim=4):
    return random_points(SplitMix64(seed), [lo] * dim, [hi] * dim, count)


@pytest.fixture
def pts():
    return sample(12)


# acceptance criteria report one line each in the terminal summary
ACCEPTANCE_LINES: list = []


@pytest.fixture
def record():
    def add(number: int, title: str, ok: bool, detail: str):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
