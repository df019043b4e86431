import sys

import numpy as np
import pytest

from spectral_trace_lab import geometry


@pytest.fixture(scope="session")
def round_metric():
    return geometry.builtin_metric("round-sphere")


@pytest.fixture(scope="session")
def zoll():
    return geometry.builtin_metric("zoll-of-revolution", eps=0.1)


@pytest.fixture(scope="session")
def control():
    return geometry.control_metric(0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)



def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
