import numpy as np
import pytest

from calmreg.exceptions import NumericalError, ValidationError
from calmreg.linalg import check_psd, op_norm, psd_inv_sqrt, psd_sqrt, random_psd, spd_solve


def test_sqrt_roundtrip(rng):
    B = random_psd(rng, 5) + np.eye(5)
    root = psd_sqrt(B)
    assert np.allclose(root @ root, B)
    assert np.allclose(psd_inv_sqrt(B) @ B @ psd_inv_sqrt(B), np.eye(5))


def test_check_psd_rejects():
    with pytest.raises(ValidationError):
        check_psd(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValidationError):
        check_psd(np.diag([1.0, -1.0]))


def test_check_psd_relative_tolerance():
    B = 1e6 * np.diag([1.0, 0.0])
    B[1, 1] = -1e-6
    _, eigvals = check_psd(B)
    assert eigvals[-1] == pytest.approx(1e6)


def test_spd_solve_singular():
    with pytest.raises(NumericalError, match="lambda_min"):
        spd_solve(np.diag([1.0, 0.0]), np.ones(2))


def test_op_norm():
    assert op_norm(np.diag([-3.0, 2.0])) == 3.0
    assert op_norm(np.zeros((0, 0))) == 0.0
