import numpy as np
import pytest

from calmreg.config import reset_config


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full Monte Carlo runs (deselect with -m 'not slow')")


@pytest.fixture(autouse=True)
def fresh_config(monkeypatch):
    """Every test starts from default settings."""
    for name in ("CALMREG_THREADS", "CALMREG_BLOCK_SIZE", "CALMREG_SEED", "CALMREG_SOLVER_TOL",
                 "CALMREG_SOLVER_MAX_ITER", "CALMREG_THETA_SAMPLES", "CALMREG_DIRECTIONS", "CALMREG_C_RING"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.setattr("calmreg.config.load_dotenv", lambda *args, **kwargs: False)
    reset_config()
    yield
    reset_config()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def fast_checks(monkeypatch):
    """Smaller sampling budget for the regularity certificates."""
    monkeypatch.setenv("CALMREG_THETA_SAMPLES", "20")
    monkeypatch.setenv("CALMREG_DIRECTIONS", "10")
    reset_config()
