"""Acceptance criteria 1-10, one test each.

Each test prints ``criterion i: PASS|FAIL <summary>``; the lines are also
repeated in the terminal summary so they survive output capture.
"""

import pytest

from cgcert import bench
from cgcert.config import load_settings

LINES = {}


@pytest.fixture(scope="module")
def settings():
    return load_settings()


@pytest.mark.slow
@pytest.mark.parametrize("number", range(1, 11))
def test_criterion(number, settings):
    result = getattr(bench, f"criterion_{number}")(settings)
    line = f"criterion {number}: {'PASS' if result['passed'] else 'FAIL'}  {result['summary']}"
    LINES[number] = line
    print(line)
    assert result["passed"], line
