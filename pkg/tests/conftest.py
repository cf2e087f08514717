import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mvonline.experiment import load_config

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# Lines appended here by the acceptance module are echoed after the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_spd(rng, m, scale=0.05, ridge=1e-3):
    A = rng.standard_normal((m, m))
    S = scale * A @ A.T + ridge * np.eye(m)
    return 0.5 * (S + S.T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def factor_market():
    """The twelve-point i.i.d. market shipped in configs/iid_constant.yaml."""
    return load_config(os.path.join(CONFIGS, "iid_constant.yaml")).market
