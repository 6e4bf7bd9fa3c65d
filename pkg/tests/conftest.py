import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ssprollout.model import KernelSsp, STOP  # noqa: E402

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def chain3():
    """Deterministic unit-cost chain 0 -> 1 -> 2 -> t (t = 3)."""
    actions = [["go"], ["go"], ["go"], [STOP]]
    rows = [[[(1, 1.0)]], [[(2, 1.0)]], [[(3, 1.0)]]]
    return KernelSsp.from_rows(4, 3, actions, rows, [[1.0], [1.0], [1.0]])


@pytest.fixture
def trap():
    """State 0 may exit (cost 1) or self-loop forever (cost 0)."""
    actions = [["exit", "loop"], [STOP]]
    rows = [[[(1, 1.0)], [(0, 1.0)]]]
    return KernelSsp.from_rows(2, 1, actions, rows, [[1.0, 0.0]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
