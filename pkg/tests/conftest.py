import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from humwave import ControlRegion, GalerkinSystem, SpaceWeight, TimeWeight, square_modes

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def record():
    """Collect one summary line per acceptance criterion."""

    def _record(criterion, ok, detail):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def square2000():
    return square_modes(2000)


@pytest.fixture(scope="session")
def square400(square2000):
    return square2000.truncate(400)


@pytest.fixture(scope="session")
def two_sides_system(square2000):
    """Square, two sides of width 0.2, constant weights, T = 3."""
    return GalerkinSystem(square2000, SpaceWeight(ControlRegion.square_two_sides(0.2)),
                          TimeWeight(3.0))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def cache_dir(tmp_path):
    d = tmp_path / "cache"
    d.mkdir()
    return str(d)
