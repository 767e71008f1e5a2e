import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(20210707)


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion: ``criterion(number, ok, detail)``."""
    seen = []

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        seen.append(line)
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    yield record
    if not seen:
        ACCEPTANCE_LINES.append(f"{request.node.name}: FAIL  (errored before its check)")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
