import numpy as np
import pytest

import gate


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if gate.LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(gate.LINES):
            terminalreporter.write_line(gate.LINES[n])
