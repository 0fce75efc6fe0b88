import math

import numpy as np
import pytest

from calmreg.exceptions import DomainError, NumericalError, ValidationError
from calmreg.quad_oracle import (QuadObjective, concentration_check, fisher_wilks_brackets,
                                 linear_perturb_shift, maximize, measured_omega, quad_penalty_bias)


def test_linear_perturbation_shift():
    q = QuadObjective(np.diag([1.0, 2.0]), np.zeros(2))
    shift, gain = linear_perturb_shift(q, np.array([1.0, 1.0]))
    assert shift == pytest.approx([1.0, 0.5])
    assert gain == pytest.approx(0.75)
    top = maximize(lambda u: q(u) + float(u.sum()), np.zeros(2))
    assert top == pytest.approx(shift, abs=1e-6)


def test_penalty_bias():
    q = QuadObjective(np.eye(2), np.array([2.0, 0.0]))
    bias, gain = quad_penalty_bias(q, np.eye(2))
    assert bias == pytest.approx([-1.0, 0.0])
    assert gain == pytest.approx(1.0)


def test_objective_validation():
    with pytest.raises(NumericalError):
        QuadObjective(np.diag([1.0, 0.0]), np.zeros(2))
    with pytest.raises(ValidationError):
        QuadObjective(np.eye(2), np.zeros(3))


def test_brackets():
    brackets = fisher_wilks_brackets(1.0 / 3.0, 1.0)
    assert brackets.wilks_lo == pytest.approx(-0.25)
    assert brackets.wilks_hi == pytest.approx(0.5)
    assert brackets.fisher_resid == pytest.approx(1.5)
    assert brackets.norm_hi == pytest.approx(1.5 * (1.0 + math.sqrt(2.0 / 3.0)))
    assert brackets.fisher_valid
    assert not fisher_wilks_brackets(0.5, 1.0).fisher_valid
    with pytest.raises(DomainError):
        fisher_wilks_brackets(1.0, 1.0)


def test_exact_quadratic_brackets_are_tight():
    q = QuadObjective(np.array([[2.0, 0.5], [0.5, 1.0]]), np.array([0.3, -0.2]), value0=1.0)
    A = np.array([0.4, -0.1])
    top = maximize(lambda u: q(u) + float(A @ u), q.center,
                   grad=lambda u: q.gradient(u) + A, hess=lambda u: -q.F)
    shift, gain = linear_perturb_shift(q, A)
    assert top - q.center == pytest.approx(shift, abs=1e-10)
    assert 2.0 * gain == pytest.approx(float(A @ np.linalg.solve(q.F, A)))


def test_measured_omega(rng):
    q = QuadObjective(np.diag([1.0, 4.0]), np.zeros(2))
    assert measured_omega(q, q, 1.0, rng) < 1e-6
    cubic = measured_omega(lambda u: q(u) + 0.1 * u[0] ** 3, q, 1.0, rng)
    assert 0.0 < cubic <= 0.2 + 1e-6


def test_concentration_check():
    q = QuadObjective(np.eye(2), np.zeros(2))
    assert concentration_check(q, q, np.array([0.3, 0.0]), nu=2.0 / 3.0, r=1.0)
    assert concentration_check(q, q, np.array([0.3, 0.0]), nu=2.0 / 3.0, r=1.0, grad=q.gradient)
    with pytest.raises(DomainError):
        concentration_check(q, q, np.array([1.0, 0.0]), nu=2.0 / 3.0, r=1.0)
