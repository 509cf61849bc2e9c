import sys

import numpy as np
import pytest

from jawkin.pipeline import run_synthetic
from jawkin.synth import MotionProfile, synthesize_session


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def noiseless_open_close():
    sess = synthesize_session(MotionProfile("open_close"), noise=0.0, seed=3)
    return sess, run_synthetic(sess)


@pytest.fixture(scope="session")
def noisy_open_close():
    sess = synthesize_session(MotionProfile("open_close"), noise=0.1, seed=4)
    return sess, run_synthetic(sess)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
