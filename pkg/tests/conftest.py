import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from distfield.field import FieldParams, GaussianBellField, Region  # noqa: E402
from distfield.quantizer import make_uniform  # noqa: E402

from acceptance_log import LINES as ACCEPTANCE_LINES  # noqa: E402


@pytest.fixture
def reference_field():
    return GaussianBellField(FieldParams(8.0, 4.0, 4.0), spread=4.0)


@pytest.fixture
def region():
    return Region(0.0, 8.0, 0.0, 8.0)


@pytest.fixture
def q8():
    return make_uniform(8, 1.0, 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
