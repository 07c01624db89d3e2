import numpy as np
import pytest

from aeroservo.geometry import rotvec_exp


def random_rotation(rng, max_angle=np.pi):
    v = rng.normal(size=3)
    return rotvec_exp(v / np.linalg.norm(v) * rng.uniform(0.0, max_angle))


def random_unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in mod.LINES:
            terminalreporter.write_line(line)
