import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gjprop.cubic import CubicCell  # noqa: E402


@pytest.fixture(scope="session")
def cell():
    return CubicCell(0.15)


@pytest.fixture(scope="session")
def cell20():
    return CubicCell(0.2)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.result_lines():
        terminalreporter.write_line(line)
