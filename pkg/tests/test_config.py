import pytest

from calmreg.config import CalmregConfig, get_config, reset_config
from calmreg.exceptions import ConfigError, DomainError, NumericalError, ValidationError


def test_defaults():
    config = get_config()
    assert config.solver.tol == 1e-10
    assert config.solver.max_iter == 200
    assert config.conditions.theta_samples == 200
    assert config.monte_carlo.block_size == 4096
    assert config.monte_carlo.threads >= 1


def test_singleton_and_reset(monkeypatch):
    first = get_config()
    assert get_config() is first
    monkeypatch.setenv("CALMREG_THREADS", "3")
    reset_config()
    assert get_config().monte_carlo.threads == 3


@pytest.mark.parametrize("name, value", [
    ("CALMREG_THREADS", "0"),
    ("CALMREG_THREADS", "many"),
    ("CALMREG_BLOCK_SIZE", "-5"),
    ("CALMREG_SOLVER_TOL", "tight"),
])
def test_bad_environment(monkeypatch, name, value):
    monkeypatch.setenv(name, value)
    with pytest.raises(ConfigError):
        CalmregConfig()


def test_to_dict_sections():
    payload = get_config().to_dict()
    assert set(payload) == {"solver", "monte_carlo", "conditions", "bisection"}
    assert payload["bisection"]["xc_tol"] == 1e-8


def test_error_hierarchy():
    assert issubclass(ConfigError, ValidationError)
    assert issubclass(ValidationError, ValueError)
    assert issubclass(DomainError, ValueError)
    assert issubclass(NumericalError, ArithmeticError)
    assert str(ValidationError("bad shape", check="dimensions")) == "dimensions: bad shape"
