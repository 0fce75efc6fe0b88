import math

import numpy as np
import pytest

from calmreg.calming import (CalmedProblem, CalmingConstants, ExtendedPoint, bias_and_risk_bounds,
                             calming_constants, concentration_radius, effective_dimension, effective_score,
                             eta_partial, extended_loglik, fisher_wilks_report, fit_joint, fit_profile,
                             full_dim_radius, gauss_newton_step, info_pack, population_target,
                             profile_gradient, profile_objective, semiparametric_information,
                             smoothness_constants)
from calmreg.exceptions import DomainError, ValidationError
from calmreg.model import Smoother, SquareModel, build_fixture


def linear_problem(rng, n=50, p=2, penalty=0.0, sigma=1.0):
    model, theta_star = build_fixture("linear", n=n, p=p, seed=3)
    eps = sigma * rng.standard_normal(n)
    prob = CalmedProblem.from_observations(model, Smoother.identity(n), penalty * np.eye(p),
                                           model.value(theta_star) + eps)
    return prob, theta_star, eps


def sine_problem(rng, n=60, sigma=0.1):
    model, theta_star = build_fixture("sine", n=n)
    Y = model.value(theta_star) + sigma * rng.standard_normal(n)
    return CalmedProblem.from_observations(model, Smoother.identity(n), 0.01 * np.eye(2), Y), theta_star


def test_ridge_closed_form(rng):
    prob, _, _ = linear_problem(rng, penalty=0.7)
    psi = prob.model.psi
    expected = np.linalg.solve(psi @ psi.T + 1.4 * np.eye(2), psi @ prob.Z)
    fit = fit_profile(prob, np.zeros(2))
    assert fit.converged
    assert np.allclose(fit.theta, expected, atol=1e-9)
    assert all(b <= a for a, b in zip(fit.trace, fit.trace[1:]))


def test_eta_is_midpoint(rng):
    prob, theta_star, _ = linear_problem(rng)
    eta = eta_partial(prob, theta_star)
    assert np.allclose(eta, 0.5 * (prob.Z + prob.model.value(theta_star)))
    assert extended_loglik(prob, ExtendedPoint(theta_star, eta)) >= \
        extended_loglik(prob, ExtendedPoint(theta_star, eta + 0.01))


def test_profile_objective_is_twice_negative_extended_max(rng):
    prob, theta_star, _ = linear_problem(rng, penalty=0.3)
    theta = theta_star + 0.1
    top = extended_loglik(prob, ExtendedPoint(theta, eta_partial(prob, theta)))
    assert profile_objective(prob, theta) == pytest.approx(-4.0 * top)


def test_gauss_newton_step_on_square():
    prob = CalmedProblem(SquareModel(), Smoother.identity(1), np.zeros((1, 1)), np.array([6.0]))
    assert gauss_newton_step(prob, np.array([2.0])) == pytest.approx([2.5])


def test_joint_fit_matches_profile(rng):
    prob, theta_star = sine_problem(rng)
    profile = fit_profile(prob, theta_star)
    joint = fit_joint(prob, ExtendedPoint(theta_star, eta_partial(prob, theta_star)))
    assert profile.converged
    assert np.allclose(joint.theta, profile.theta, atol=1e-6)
    assert np.allclose(joint.eta, profile.eta, atol=1e-6)


def test_joint_fit_stops_at_profile_accuracy(rng):
    prob, theta_star = sine_problem(rng)
    tol = 1e-6
    start = theta_star + 0.02
    joint = fit_joint(prob, ExtendedPoint(start, eta_partial(prob, start)), tol=tol)
    threshold = tol * (1.0 + np.linalg.norm(prob.Z))
    assert np.linalg.norm(profile_gradient(prob, joint.theta)) <= threshold


def test_zero_iterations_return_start(rng):
    prob, theta_star = sine_problem(rng)
    start = theta_star + 0.05
    joint = fit_joint(prob, ExtendedPoint(start, np.zeros(prob.q)), max_iter=0)
    assert np.array_equal(joint.theta, start)
    assert np.allclose(joint.eta, eta_partial(prob, start))
    fit = fit_profile(prob, start, max_iter=0)
    assert fit.iterations == 0 and not fit.converged


def test_linear_fisher_and_wilks_are_exact(rng):
    prob, theta_star, eps = linear_problem(rng, penalty=0.5)
    target = population_target(prob, prob.model.value(theta_star))
    fit = fit_profile(prob, np.zeros(2))
    info = info_pack(prob, target.theta)
    score = effective_score(prob, target.theta, eps, info)
    consts = CalmingConstants(*smoothness_constants(0.0, 0.0), tau=0.0, varrho=0.0)
    report = fisher_wilks_report(prob, fit.theta, target.theta, score, consts, info)
    assert report.omega_GG == 0.0
    assert report.fisher_residual < 1e-8
    assert report.wilks_residual < 1e-8 * (1.0 + float(prob.Z @ prob.Z))
    assert report.conditions_met


def test_effective_dimension_without_penalty(rng):
    prob, theta_star, _ = linear_problem(rng, n=40, p=3)
    score = effective_dimension(prob, theta_star, np.eye(40), x=1.0)
    assert score.p_GG == pytest.approx(3.0)
    assert score.r_GG == pytest.approx(math.sqrt(3.0) + math.sqrt(2.0))


def test_risk_prediction(rng):
    prob, theta_star, _ = linear_problem(rng, penalty=1.0)
    score = effective_dimension(prob, theta_star, np.eye(50))
    consts = CalmingConstants(16.0, 42.0, tau=0.0, varrho=0.0)
    report = bias_and_risk_bounds(prob, theta_star, consts, score)
    # ΨΨᵀ = 25·I, 𝔻_𝔾² = 27·I
    assert score.p_GG == pytest.approx(50.0 / 27.0)
    assert report.b_GG ** 2 == pytest.approx(4.0 * float(theta_star @ theta_star) / 27.0)
    assert report.risk_prediction == pytest.approx(score.p_GG + report.b_GG ** 2)
    assert np.allclose(report.bias_vec_approx, -2.0 * theta_star / 27.0)
    assert report.valid


def test_smoothness_constants():
    assert smoothness_constants(0.0, 0.0) == (16.0, 42.0)
    c3, _ = smoothness_constants(0.25, 0.0)
    assert c3 == pytest.approx(16.0 * 2.0 ** 1.5)
    with pytest.raises(DomainError):
        smoothness_constants(0.5, 0.0)
    with pytest.raises(DomainError):
        smoothness_constants(0.0, 1.0)


def test_radii():
    assert full_dim_radius(np.eye(4), 1.0, 0.0) == pytest.approx(2.0 + math.sqrt(2.0))
    assert concentration_radius(1.0, 0.0) == pytest.approx(1.5 * math.sqrt(2.0))
    with pytest.raises(DomainError):
        concentration_radius(1.0, 0.6)


def test_linear_model_is_calm(rng, fast_checks):
    prob, theta_star, _ = linear_problem(rng)
    consts = calming_constants(prob, theta_star, np.eye(50), rng=rng)
    assert consts.tau == 0.0 and consts.varrho == 0.0
    assert consts.omega_plus == pytest.approx(0.0, abs=1e-10)
    assert consts.c3 == pytest.approx(16.0)
    assert consts.conditions_met


def test_semiparametric_information(rng):
    prob, theta_star, _ = linear_problem(rng, penalty=0.4)
    psi = prob.model.psi
    info = info_pack(prob, theta_star)
    assert not info.gn_approximated
    assert np.allclose(semiparametric_information(info), 0.5 * psi @ psi.T + 0.4 * np.eye(2))


def test_population_target_without_penalty(rng):
    prob, theta_star, _ = linear_problem(rng)
    target = population_target(prob, prob.model.value(theta_star))
    assert np.allclose(target.theta, theta_star, atol=1e-9)
    assert np.allclose(target.eta, prob.model.value(theta_star))


def test_dimension_checks(rng):
    model, _ = build_fixture("sine", n=10)
    with pytest.raises(ValidationError):
        CalmedProblem(model, Smoother.identity(10), np.eye(3), np.zeros(10))
    with pytest.raises(ValidationError):
        CalmedProblem(model, Smoother.identity(10), np.eye(2), np.zeros(9))
    with pytest.raises(ValidationError):
        CalmedProblem(model, Smoother.identity(10), np.eye(2), np.full(10, np.nan))
