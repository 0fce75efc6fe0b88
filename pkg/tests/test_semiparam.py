import logging

import numpy as np
import pytest

from calmreg.exceptions import DomainError, ValidationError
from calmreg.semiparam import (BlockHessian, composite_rho, inverse_quadform, orthogonalize,
                               partial_quad_shift, sandwich_check, semiorthogonality_argmax_check,
                               semiparam_bias_bound, transformed_mixed_derivative)

F_SMALL = np.array([[2.0, 1.0], [1.0, 2.0]])


def quadratic(F):
    def f(theta, eta):
        v = np.concatenate([theta, eta])
        return -0.5 * float(v @ F @ v)
    return f


def test_orthogonalize_small_case():
    blocks = BlockHessian.from_full(F_SMALL, 1)
    transform = orthogonalize(blocks)
    assert transform.rho == pytest.approx(0.25)
    assert transform.C == pytest.approx(np.array([[0.5]]))
    assert transform.D_eff_sq == pytest.approx(np.array([[1.5]]))


def test_sandwich_factor_is_square_root_of_rho():
    blocks = BlockHessian.from_full(F_SMALL, 1)
    assert sandwich_check(F_SMALL, blocks, 0.25)
    assert not sandwich_check(F_SMALL, blocks, 0.0625)


def test_from_full_rejects_bad_split():
    with pytest.raises(ValidationError):
        BlockHessian.from_full(F_SMALL, 2)


def test_nuisance_reparametrization():
    transform = orthogonalize(BlockHessian.from_full(F_SMALL, 1)).anchored(np.array([1.0]))
    assert transform.nuisance(np.array([3.0]), np.array([0.0])) == pytest.approx([-1.0])


def test_partial_quad_shift():
    blocks = BlockHessian.from_full(F_SMALL, 1)
    assert partial_quad_shift(blocks, np.array([4.0])) == pytest.approx([-2.0])
    with pytest.raises(ValidationError):
        partial_quad_shift(blocks, np.zeros(2))


def test_composite_rho_without_coupling():
    F = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 0.0], [1.0, 0.0, 2.0]])
    result = composite_rho(F, (1, 1, 1))
    assert result.rho_z == pytest.approx(0.25)
    assert result.rho_tau == pytest.approx(0.25)
    assert result.direct == pytest.approx(result.total)


def test_composite_rho_coupled_nuisance_warns(caplog):
    F = np.array([[1.0, 0.1, 0.1], [0.1, 1.0, -0.9], [0.1, -0.9, 1.0]])
    with caplog.at_level(logging.WARNING, logger="calmreg.semiparam"):
        result = composite_rho(F, (1, 1, 1))
    assert result.total == pytest.approx(0.02)
    assert result.direct == pytest.approx(0.2)
    assert "exceeds pairwise sum" in caplog.text


def test_composite_rho_partition_mismatch():
    with pytest.raises(ValidationError):
        composite_rho(np.eye(3), (1, 1, 2))


def test_mixed_derivative_vanishes_after_transform():
    f = quadratic(F_SMALL)
    transform = orthogonalize(BlockHessian.from_full(F_SMALL, 1))
    mixed = transformed_mixed_derivative(f, transform, (np.zeros(1), np.zeros(1)))
    assert np.allclose(mixed, 0.0, atol=1e-6)
    untouched = transformed_mixed_derivative(f, orthogonalize(BlockHessian(np.eye(1) * 2, np.zeros((1, 1)),
                                                                           np.eye(1) * 2)),
                                             (np.zeros(1), np.zeros(1)))
    assert untouched == pytest.approx(np.array([[-1.0]]), abs=1e-4)


def test_argmax_stays_at_reference():
    f = quadratic(F_SMALL)
    transform = orthogonalize(BlockHessian.from_full(F_SMALL, 1))
    worst = semiorthogonality_argmax_check(f, transform, np.zeros(1), [[-1.0], [0.5], [2.0]])
    assert worst < 1e-6


def test_argmax_requires_concavity():
    def convex(theta, eta):
        return float(theta @ theta + eta @ eta)
    transform = orthogonalize(BlockHessian.from_full(np.eye(2), 1))
    with pytest.raises(DomainError):
        semiorthogonality_argmax_check(convex, transform, np.zeros(1), [[0.0]])


def test_inverse_quadform_identity():
    D = np.diag([2.0, 3.0])
    assert inverse_quadform(D, D @ D) == pytest.approx(1.0)


def test_bias_bound():
    assert semiparam_bias_bound(1.0, 1.0, 64.0, 1.0, nu=0.5) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        semiparam_bias_bound(1.0, 1.0, 0.0, 1.0)
