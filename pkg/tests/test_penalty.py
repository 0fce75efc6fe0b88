import math

import numpy as np
import pytest

from calmreg.exceptions import DomainError, ValidationError
from calmreg.penalty import (PenaltyPath, effective_dim_w, oracle_risk_w, risk_curve, select_w_balance,
                             select_w_risk)


@pytest.fixture
def scalar_path():
    # p_w = 4/(1 + w)
    return PenaltyPath(np.array([[1.0]]), np.eye(1), sigma_sq=4.0)


def test_effective_dimension(scalar_path):
    assert effective_dim_w(scalar_path, 1.0) == pytest.approx(2.0)
    with pytest.raises(DomainError):
        effective_dim_w(scalar_path, 0.0)


def test_risk_minimizer(scalar_path):
    selection = select_w_risk(scalar_path)
    assert selection.w_star == pytest.approx(1.0, rel=1e-6)
    assert selection.risk == pytest.approx(3.0)
    assert not selection.fallback


def test_risk_minimizer_interior_basin():
    # p_w = 9/(1 + w), so p_w + w is smallest at w = 2
    path = PenaltyPath(np.array([[1.0]]), np.eye(1), sigma_sq=9.0)
    selection = select_w_risk(path, coarse_points=17)
    assert selection.w_star == pytest.approx(2.0, rel=1e-6)
    assert selection.risk == pytest.approx(5.0)


def test_risk_minimizer_on_bracket_edge(scalar_path):
    selection = select_w_risk(scalar_path, bracket=(2.0, 10.0))
    assert selection.w_star == pytest.approx(2.0, rel=1e-6)
    assert selection.risk == pytest.approx(4.0 / 3.0 + 2.0, rel=1e-6)


def test_balance_point(scalar_path):
    assert select_w_balance(scalar_path, 1.0) == pytest.approx((math.sqrt(17.0) - 1.0) / 2.0, rel=1e-10)
    with pytest.raises(DomainError):
        select_w_balance(scalar_path, 0.0)


def test_effective_dimension_decreases(rng):
    A = rng.standard_normal((30, 4))
    path = PenaltyPath(A, np.diag([1.0, 2.0, 3.0, 4.0]), w_grid=np.logspace(-3, 3, 25))
    assert path.is_strictly_decreasing()
    assert path.p_w[0] == pytest.approx(4.0, rel=1e-2)


def test_from_gram_matches_design(rng):
    A = rng.standard_normal((10, 3))
    path = PenaltyPath.from_gram(A.T @ A, np.eye(3))
    assert np.allclose(path.gram, A.T @ A)
    assert effective_dim_w(path, 0.5) == pytest.approx(effective_dim_w(PenaltyPath(A, np.eye(3)), 0.5))


def test_oracle_risk_without_signal(scalar_path):
    assert oracle_risk_w(scalar_path, 2.0, np.zeros(1)) == pytest.approx(effective_dim_w(scalar_path, 2.0))
    # bias² = (w/√(1 + w))² at θ* = 1
    assert oracle_risk_w(scalar_path, 2.0, np.ones(1)) == pytest.approx(4.0 / 3.0 + 4.0 / 3.0)


def test_risk_curve(scalar_path):
    points = risk_curve(scalar_path, [0.5, 1.0, 2.0])
    assert [p.risk for p in points] == pytest.approx([4.0 / 1.5 + 0.5, 3.0, 4.0 / 3.0 + 2.0])
    with pytest.raises(ValidationError):
        risk_curve(scalar_path)


def test_bad_inputs(scalar_path):
    with pytest.raises(DomainError):
        select_w_risk(scalar_path, bracket=(1.0, 0.5))
    with pytest.raises(ValidationError):
        PenaltyPath(np.ones((3, 2)), np.eye(3))
    with pytest.raises(ValidationError):
        PenaltyPath(np.ones((3, 2)), np.eye(2), w_grid=[1.0, 0.5])
