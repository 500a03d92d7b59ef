import sys
from pathlib import Path

import numpy as np
import pytest

# lets test modules import the local ``oracles`` and ``helpers``
sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """``verdict(n, passed, detail)`` records one acceptance line; the lines
    are repeated in the terminal summary so they survive output capture."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(n, passed, detail):
        line = f"criterion {n}: {'PASS' if passed else 'FAIL'} - {detail}"
        print(line)
        lines.append(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
