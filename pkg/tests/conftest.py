import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mldf.synthetic import make_independent  # noqa: E402

# (criterion number, PASS/FAIL, detail) appended by test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, verdict, detail in sorted(ACCEPTANCE_LINES, key=lambda r: (r[0], r[2])):
        terminalreporter.write_line(f"criterion {number}: {verdict}  {detail}")


def random_scores(rng, m, l, ties=False):
    if ties:
        return rng.integers(0, 6, size=(m, l)) / 5.0
    return rng.random((m, l))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_data():
    return make_independent(120, 3, seed=7)
