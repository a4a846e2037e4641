import time

import pytest

from bicoptersim.presets import PRESETS
from bicoptersim.sim import simulate


@pytest.fixture(scope="session")
def ellipse_slow_run():
    """Full ellipse-slow run plus its wall time (the acceptance budget)."""
    t0 = time.perf_counter()
    records = simulate(PRESETS["ellipse-slow"])
    wall = time.perf_counter() - t0
    return records, wall


@pytest.fixture(scope="session")
def ellipse_fast_run():
    return simulate(PRESETS["ellipse-fast"])


@pytest.fixture(scope="session")
def hilbert_slow_run():
    return simulate(PRESETS["hilbert-slow"])


@pytest.fixture(scope="session")
def hilbert_fast_run():
    return simulate(PRESETS["hilbert-fast"])


@pytest.fixture(scope="session")
def regulation_run():
    return simulate(PRESETS["regulation"])
