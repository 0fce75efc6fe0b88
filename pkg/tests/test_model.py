import numpy as np
import pytest

from calmreg.exceptions import DomainError, ValidationError
from calmreg.model import (LinearModel, LocalSet, SineModel, Smoother, SquareModel, build_fixture,
                           check_grad_regularity, check_phi_condition, check_r0, estimate_tau,
                           effective_sample_size, image_increment_check, load_data_csv, load_design_csv,
                           sample_local_set, smoothed_map)


def test_linear_model_has_no_curvature(rng):
    model = LinearModel(rng.standard_normal((3, 10)))
    u = rng.standard_normal(3)
    assert np.allclose(model.directional(np.zeros(3), u, 1), model.psi.T @ u)
    for k in (2, 3, 4):
        assert np.all(model.directional(np.zeros(3), u, k) == 0.0)
    with pytest.raises(DomainError):
        model.directional(np.zeros(3), u, 5)


def test_sine_jacobian_matches_differences():
    model, theta = build_fixture("sine", n=30)
    h = 1e-6
    fd = np.vstack([(model.value(theta + h * e) - model.value(theta - h * e)) / (2 * h) for e in np.eye(2)])
    assert np.allclose(model.jacobian(theta), fd, atol=1e-7)


@pytest.mark.parametrize("k", [2, 3])
def test_sine_directional_matches_differences(k):
    model, theta = build_fixture("sine", n=20)
    u = np.array([0.6, -0.8])
    h = 1e-5
    ahead = model.directional(theta + h * u, u, k - 1)
    behind = model.directional(theta - h * u, u, k - 1)
    assert np.allclose(model.directional(theta, u, k), (ahead - behind) / (2 * h), atol=1e-5)


def test_square_tau():
    model = SquareModel()
    theta0 = np.array([2.0])
    smoother = Smoother.identity(1)
    local = LocalSet.around(model, smoother, theta0, r0=0.1)
    tau = estimate_tau(model, smoother, local, 2, np.empty((0, 1)), directions=4)
    assert tau == pytest.approx(1.0 / 8.0)
    with pytest.raises(DomainError):
        estimate_tau(model, smoother, local, 5, np.empty((0, 1)))


def test_unknown_fixture():
    with pytest.raises(ValidationError):
        build_fixture("cubic")


def test_linear_fixture_is_deterministic():
    a, theta_a = build_fixture("linear", n=50, p=3, seed=4)
    b, _ = build_fixture("linear", n=50, p=3, seed=4)
    assert np.array_equal(a.psi, b.psi)
    assert np.allclose(a.psi @ a.psi.T, 50.0 / 3.0 * np.eye(3))
    assert theta_a.shape == (3,)


def test_smoother_shapes(rng):
    model, theta = build_fixture("exp_decay", n=40)
    proj = Smoother.random_projection(10, 40, rng)
    assert (proj.q, proj.n) == (10, 40)
    value, grad = smoothed_map(model, proj, theta)
    assert value.shape == (10,) and grad.shape == (2, 10)
    tangent = Smoother.tangent(model, theta)
    assert tangent.q == 2
    with pytest.raises(ValidationError):
        smoothed_map(model, Smoother.identity(39), theta)


def test_identity_smoother_phi_condition():
    model, theta = build_fixture("sine", n=25)
    assert check_phi_condition(model, Smoother.identity(25), theta[None, :]) == pytest.approx(1.0)


def test_local_set_sampling(rng):
    model, theta = build_fixture("sine", n=25)
    local = LocalSet.around(model, Smoother.identity(25), theta, r0=0.5)
    samples = sample_local_set(local, rng, 200)
    assert samples.shape == (200, 2)
    assert all(local.contains(t) for t in samples)


def test_effective_sample_size_is_smallest_information_eigenvalue():
    local = LocalSet(np.zeros(2), np.diag([9.0, 4.0]), r0=1.0)
    assert effective_sample_size(local) == pytest.approx(4.0)


def test_grad_regularity_linear_is_flat(rng):
    model = LinearModel(rng.standard_normal((2, 15)))
    smoother = Smoother.identity(15)
    local = LocalSet.around(model, smoother, np.zeros(2), r0=1.0)
    omega, c2 = check_grad_regularity(model, smoother, local, sample_local_set(local, rng, 10), rng=rng)
    assert omega == pytest.approx(0.0, abs=1e-10)
    assert c2 == 0.0


def test_check_r0():
    assert check_r0(0.1, 1.0) == (0.2, True)
    assert check_r0(0.5, 1.0) == (1.0, False)


def test_image_increment():
    model, theta = build_fixture("sine", n=25)
    smoother = Smoother.identity(25)
    local = LocalSet.around(model, smoother, theta, r0=0.5)
    direction = np.array([1.0, 0.0])
    inside = theta + 0.4 * direction / local.norm(theta + direction)
    assert image_increment_check(model, smoother, local, inside)
    with pytest.raises(DomainError):
        image_increment_check(model, smoother, local, theta + 10.0 * direction)


def test_load_data_csv(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("x,y\n0.0,1.5\n1.0,2.5\n", encoding="utf-8")
    y, x = load_data_csv(path)
    assert np.array_equal(y, [1.5, 2.5]) and np.array_equal(x, [0.0, 1.0])


def test_load_design_csv(tmp_path):
    path = tmp_path / "design.csv"
    path.write_text("x,weights\n0.0,1.0\n1.0,2.0\n", encoding="utf-8")
    x, w = load_design_csv(path)
    assert np.array_equal(x, [0.0, 1.0]) and np.array_equal(w, [1.0, 2.0])


@pytest.mark.parametrize("content", ["x\n1.0\n", "x,y\n1.0,abc\n"])
def test_bad_data_csv(tmp_path, content):
    path = tmp_path / "bad.csv"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(ValidationError):
        load_data_csv(path)


def test_missing_data_file(tmp_path):
    with pytest.raises(ValidationError):
        load_data_csv(tmp_path / "absent.csv")
