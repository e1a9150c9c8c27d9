import os
import sys

# worker pool must be large enough for the thread-count determinism checks
os.environ.setdefault("NUMBA_NUM_THREADS", "4")
sys.path.insert(0, os.path.dirname(__file__))

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from tetrashell.primitives import icosphere  # noqa: E402


@pytest.fixture(scope="session")
def sphere3():
    return icosphere(3, 0.5).with_normals()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    results = sys.modules.get("test_acceptance")
    if results is None or not results.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results.RESULTS):
        terminalreporter.write_line(results.RESULTS[number])
