import numpy as np
import pytest

from nmqa.lattice import build_grid, make_field

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid5():
    return build_grid(5, 5)


@pytest.fixture
def square_field(grid5):
    return make_field(grid5, "square2d", params={"row_range": [0, 2], "col_range": [0, 2]})


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
