"""Regression models, smoothing operators and local regularity certificates.

A model maps ``θ ∈ ℝᵖ`` to the regression function ``m(θ) ∈ ℝⁿ``. Jacobians
follow the ``p × n`` convention: column ``i`` of ``jacobian(θ)`` is
``∇mᵢ(θ)``. A smoother ``Φ`` (``q × n``) maps observations to the image space,
``M̄(θ) = Φm(θ)`` with gradient ``∇M̄(θ) = ∇m(θ)Φᵀ``.

The certificates (``check_phi_condition``, ``check_grad_regularity``,
``estimate_tau``) evaluate suprema over finite seeded samples of the local
set. They are estimates, not proofs.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from calmreg.exceptions import DomainError, NumericalError, ValidationError
from calmreg.linalg import check_psd, psd_inv_sqrt

logger = logging.getLogger(__name__)


class RegressionModel:
    """Base regression model.

    Subclasses implement ``value`` and ``jacobian``; ``directional`` and
    ``hessians`` default to central differences of the Jacobian.
    """

    name = "model"
    fd_step = 1e-5

    def __init__(self, p: int, n: int):
        self.p = int(p)
        self.n = int(n)

    def value(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def has_hessians(self) -> bool:
        return False

    def hessians(self, theta: np.ndarray) -> Optional[np.ndarray]:
        """Stack of ``∇²mᵢ(θ)`` with shape ``(n, p, p)``, or None if not analytic."""
        return None

    def second_directional(self, theta: np.ndarray, u: np.ndarray) -> np.ndarray:
        """``⟨∇²mᵢ(θ), u⊗u⟩`` for every observation."""
        return self.directional(theta, u, 2)

    def directional(self, theta: np.ndarray, u: np.ndarray, k: int) -> np.ndarray:
        """``⟨∇ᵏmᵢ(θ), u^⊗k⟩`` for ``k`` in 1..4."""
        theta = np.asarray(theta, dtype=float)
        u = np.asarray(u, dtype=float)
        if k == 1:
            return self.jacobian(theta).T @ u
        h = self.fd_step * (1.0 + np.linalg.norm(theta))
        if k == 2:
            return (self.jacobian(theta + h * u) - self.jacobian(theta - h * u)).T @ u / (2 * h)
        if k == 3:
            return (self.directional(theta + h * u, u, 2)
                    - self.directional(theta - h * u, u, 2)) / (2 * h)
        if k == 4:
            return (self.directional(theta + h * u, u, 2) - 2 * self.directional(theta, u, 2)
                    + self.directional(theta - h * u, u, 2)) / (h * h)
        raise DomainError(f"directional derivative order must be 1..4, got {k}")


class LinearModel(RegressionModel):
    """``m(θ) = Ψᵀθ`` with a fixed ``p × n`` design ``Ψ``."""

    name = "linear"

    def __init__(self, psi: np.ndarray):
        psi = np.atleast_2d(np.asarray(psi, dtype=float))
        super().__init__(*psi.shape)
        self.psi = psi

    def value(self, theta):
        return self.psi.T @ np.asarray(theta, dtype=float)

    def jacobian(self, theta):
        return self.psi.copy()

    @property
    def has_hessians(self) -> bool:
        return True

    def hessians(self, theta):
        return np.zeros((self.n, self.p, self.p))

    def directional(self, theta, u, k):
        if k == 1:
            return self.psi.T @ np.asarray(u, dtype=float)
        if k in (2, 3, 4):
            return np.zeros(self.n)
        raise DomainError(f"directional derivative order must be 1..4, got {k}")


class _AmplitudeModel(RegressionModel):
    """``mᵢ(θ) = θ₁·f(θ₂xᵢ)`` for a smooth profile ``f``."""

    def __init__(self, x: Sequence[float]):
        self.x = np.asarray(x, dtype=float)
        super().__init__(2, self.x.size)

    def profile(self, y: np.ndarray, order: int) -> np.ndarray:
        raise NotImplementedError

    def value(self, theta):
        a, b = theta
        return a * self.profile(b * self.x, 0)

    def jacobian(self, theta):
        a, b = theta
        y = b * self.x
        return np.vstack([self.profile(y, 0), a * self.x * self.profile(y, 1)])

    @property
    def has_hessians(self) -> bool:
        return True

    def hessians(self, theta):
        a, b = theta
        y = b * self.x
        H = np.zeros((self.n, 2, 2))
        H[:, 0, 1] = H[:, 1, 0] = self.x * self.profile(y, 1)
        H[:, 1, 1] = a * self.x ** 2 * self.profile(y, 2)
        return H

    def directional(self, theta, u, k):
        if k not in (1, 2, 3, 4):
            raise DomainError(f"directional derivative order must be 1..4, got {k}")
        a, b = theta
        u1, u2 = u
        y = b * self.x
        s = u2 * self.x
        return a * s ** k * self.profile(y, k) + k * u1 * s ** (k - 1) * self.profile(y, k - 1)


class ExpDecayModel(_AmplitudeModel):
    """``mᵢ(θ) = θ₁·exp(−θ₂xᵢ)``."""

    name = "exp_decay"

    def profile(self, y, order):
        return (-1.0) ** order * np.exp(-y)


class SineModel(_AmplitudeModel):
    """``mᵢ(θ) = θ₁·sin(θ₂xᵢ)``."""

    name = "sine"

    def profile(self, y, order):
        return np.sin(y + order * np.pi / 2.0)


class SquareModel(RegressionModel):
    """Scalar ``m(θ) = θ²`` with a single observation."""

    name = "square"

    def __init__(self):
        super().__init__(1, 1)

    def value(self, theta):
        return np.array([theta[0] ** 2])

    def jacobian(self, theta):
        return np.array([[2.0 * theta[0]]])

    @property
    def has_hessians(self) -> bool:
        return True

    def hessians(self, theta):
        return np.array([[[2.0]]])

    def directional(self, theta, u, k):
        if k == 1:
            return np.array([2.0 * theta[0] * u[0]])
        if k == 2:
            return np.array([2.0 * u[0] ** 2])
        if k in (3, 4):
            return np.zeros(1)
        raise DomainError(f"directional derivative order must be 1..4, got {k}")


class SmootherKind(Enum):
    IDENTITY = "identity"
    RANDOM_PROJECTION = "random_projection"
    TANGENT = "tangent"


@dataclass(frozen=True)
class Smoother:
    """Linear smoothing operator ``Φ`` of shape ``q × n``."""
    kind: SmootherKind
    matrix: np.ndarray = field(repr=False)
    theta0: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def q(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def identity(cls, n: int) -> 'Smoother':
        return cls(SmootherKind.IDENTITY, np.eye(n))

    @classmethod
    def random_projection(cls, q: int, n: int, rng: np.random.Generator) -> 'Smoother':
        """Gaussian ``Φ`` with entries of mean 0 and variance ``1/n``.

        Raises:
            ValidationError: if the empirical mean or variance is more than five
                standard errors away from its target.
        """
        phi = rng.standard_normal((q, n)) / math.sqrt(n)
        count = q * n
        mean, var = float(phi.mean()), float(phi.var())
        if abs(mean) > 5.0 * math.sqrt(1.0 / n / count):
            raise ValidationError(f"projection entries have mean {mean:.3e}", check="mean 0")
        if abs(var - 1.0 / n) > 5.0 * (1.0 / n) * math.sqrt(2.0 / count):
            raise ValidationError(f"projection entries have variance {var:.3e}, expected {1.0 / n:.3e}",
                                  check="variance 1/n")
        sv = linalg.svdvals(phi)
        ratio = math.sqrt(q / n)
        lo, hi = (1.0 - ratio) ** 2, (1.0 + ratio) ** 2
        if sv[-1] ** 2 < 0.5 * lo or sv[0] ** 2 > 1.5 * hi:
            logger.warning(f"random projection spectrum [{sv[-1] ** 2:.3g}, {sv[0] ** 2:.3g}] "
                           f"outside Marchenko-Pastur bracket [{lo:.3g}, {hi:.3g}]")
        return cls(SmootherKind.RANDOM_PROJECTION, phi)

    @classmethod
    def tangent(cls, model: RegressionModel, theta0) -> 'Smoother':
        """``Φ = ∇m(θ₀)``, so ``q = p``."""
        theta0 = np.asarray(theta0, dtype=float)
        return cls(SmootherKind.TANGENT, model.jacobian(theta0), theta0.copy())


@dataclass(frozen=True)
class LocalSet:
    """Ellipsoid ``Θ∘ = {θ: ‖𝔻₀(θ − θ₀)‖ ≤ r₀}``."""
    theta0: np.ndarray
    D0_sq: np.ndarray
    r0: float
    c_ring: float = 1.0

    def __post_init__(self):
        D0_sq, _ = check_psd(self.D0_sq, "D0_sq")
        object.__setattr__(self, "D0_sq", D0_sq)
        object.__setattr__(self, "theta0", np.asarray(self.theta0, dtype=float))
        if not self.r0 > 0:
            raise ValidationError(f"r0 must be positive, got {self.r0}", check="r0 > 0")
        if not self.c_ring > 0:
            raise ValidationError(f"c_ring must be positive, got {self.c_ring}", check="c_ring > 0")

    @classmethod
    def around(cls, model: RegressionModel, smoother: Smoother, theta0, r0: float,
               c_ring: float = 1.0) -> 'LocalSet':
        """Local set centred at ``θ₀`` with ``𝔻₀² = ∇M̄(θ₀)∇M̄(θ₀)ᵀ``."""
        theta0 = np.asarray(theta0, dtype=float)
        _, grad = smoothed_map(model, smoother, theta0)
        return cls(theta0, grad @ grad.T, r0, c_ring)

    def norm(self, theta) -> float:
        d = np.asarray(theta, dtype=float) - self.theta0
        return math.sqrt(max(float(d @ self.D0_sq @ d), 0.0))

    def contains(self, theta, slack: float = 1e-12) -> bool:
        return self.norm(theta) <= self.r0 * (1.0 + slack)


def smoothed_map(model: RegressionModel, smoother: Smoother, theta) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(M̄(θ), ∇M̄(θ)) = (Φm(θ), ∇m(θ)Φᵀ)``."""
    if smoother.n != model.n:
        raise ValidationError(f"smoother has {smoother.n} columns, model has n={model.n}",
                              check="dimensions")
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.p,):
        raise ValidationError(f"theta has shape {theta.shape}, expected ({model.p},)",
                              check="dimensions")
    phi = smoother.matrix
    return phi @ model.value(theta), model.jacobian(theta) @ phi.T


def effective_sample_size(local: LocalSet) -> float:
    """Smallest eigenvalue of ``𝔻₀²``."""
    return float(linalg.eigvalsh(local.D0_sq)[0])


def sample_local_set(local: LocalSet, rng: np.random.Generator, count: int) -> np.ndarray:
    """Uniform draws from the ellipsoid ``Θ∘``, shape ``(count, p)``."""
    p = local.theta0.size
    inv_root = psd_inv_sqrt(local.D0_sq)
    z = rng.standard_normal((count, p))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    z *= rng.uniform(size=(count, 1)) ** (1.0 / p)
    return local.theta0 + local.r0 * z @ inv_root


def _unit_directions(rng: np.random.Generator, count: int, p: int) -> np.ndarray:
    U = rng.standard_normal((count, p))
    return U / np.linalg.norm(U, axis=1, keepdims=True)


def check_phi_condition(model: RegressionModel, smoother: Smoother, theta_samples) -> float:
    """Smallest ``𝙲_Φ`` with ``∇m∇mᵀ ⪯ 𝙲_Φ·∇mΠ_Φ∇mᵀ`` over the samples.

    ``Π_Φ = Φᵀ(ΦΦᵀ)⁻¹Φ`` is the projector onto the row space of ``Φ``.
    """
    phi = smoother.matrix
    if smoother.n != model.n:
        raise ValidationError("smoother and model dimensions differ", check="dimensions")
    sv = linalg.svdvals(phi)
    if sv[-1] <= 1e-10 or smoother.q > smoother.n:
        raise ValidationError(f"smoother is rank deficient (smallest singular value {sv[-1]:.3e})",
                              check="full row rank")
    gram = phi @ phi.T
    c_phi = 1.0
    for theta in np.atleast_2d(theta_samples):
        J = model.jacobian(theta)
        full = J @ J.T
        proj_rows = linalg.solve(gram, phi @ J.T, assume_a="pos")
        projected = J @ phi.T @ proj_rows
        projected = 0.5 * (projected + projected.T)
        if linalg.eigvalsh(projected)[0] <= 1e-12 * max(np.trace(projected), 1e-300):
            raise NumericalError("projected Gram ∇mΠ_Φ∇mᵀ is singular")
        lam = linalg.eigh(full, projected, eigvals_only=True)
        c_phi = max(c_phi, float(lam[-1]))
    return c_phi


def _filter_inside(local: LocalSet, samples) -> np.ndarray:
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    inside = np.array([local.contains(t) for t in samples], dtype=bool)
    if not inside.all():
        logger.debug(f"skipping {int((~inside).sum())} samples outside the local set")
    return np.vstack([local.theta0[None, :], samples[inside]])


def check_grad_regularity(model: RegressionModel, smoother: Smoother, local: LocalSet, samples,
                          directions: int = 50, rng: Optional[np.random.Generator] = None):
    """Certify ``ω⁺`` and ``𝖼₂`` over sampled points of ``Θ∘``.

    ``ω⁺`` is the largest ``|λ − 1|`` over generalized eigenvalues of
    ``𝔻²(θ)`` against ``𝔻₀²``; ``𝖼₂`` is the largest ratio
    ``Σⱼ|⟨∇²M̄ⱼ, u⊗u⟩| / ‖𝔻(θ)u‖²`` over sampled unit directions. Samples
    outside the local set are skipped and ``θ₀`` is always included, so the
    certificates are monotone in ``r₀`` for a fixed sample.
    """
    lam0 = linalg.eigvalsh(local.D0_sq)
    if lam0[0] <= 1e-12 * max(lam0[-1], 1e-300):
        raise NumericalError(f"D0_sq is singular (min eigenvalue {lam0[0]:.3e})")
    rng = rng if rng is not None else np.random.default_rng(0)
    U = _unit_directions(rng, directions, model.p)
    phi = smoother.matrix
    omega_plus = 0.0
    c2 = 0.0
    for theta in _filter_inside(local, samples):
        _, grad = smoothed_map(model, smoother, theta)
        D_sq = grad @ grad.T
        lam = linalg.eigh(D_sq, local.D0_sq, eigvals_only=True)
        omega_plus = max(omega_plus, float(np.max(np.abs(lam - 1.0))))
        for u in U:
            du = grad.T @ u
            denom = float(du @ du)
            if denom <= 0:
                continue
            num = float(np.sum(np.abs(phi @ model.directional(theta, u, 2))))
            c2 = max(c2, num / denom)
    return omega_plus, c2


def estimate_tau(model: RegressionModel, smoother: Smoother, local: LocalSet, k: int, samples,
                 directions: int = 50, rng: Optional[np.random.Generator] = None) -> float:
    """Certify the smoothness constant ``τ`` of order ``k``.

    Smallest ``τ`` with ``Σⱼ⟨∇ᵏM̄ⱼ, u^⊗k⟩² ≤ τ^(2k−2)·‖𝔻(θ)u‖^(2k)`` over the
    sampled pairs ``(θ, u)``.
    """
    if k not in (2, 3, 4):
        raise DomainError(f"k must be 2, 3 or 4, got {k}")
    rng = rng if rng is not None else np.random.default_rng(0)
    U = _unit_directions(rng, directions, model.p)
    phi = smoother.matrix
    tau = 0.0
    for theta in _filter_inside(local, samples):
        _, grad = smoothed_map(model, smoother, theta)
        for u in U:
            du = grad.T @ u
            dnorm_sq = float(du @ du)
            if dnorm_sq <= 0:
                continue
            dk = phi @ model.directional(theta, u, k)
            total = float(dk @ dk)
            if total == 0.0:
                continue
            tau = max(tau, (total / dnorm_sq ** k) ** (1.0 / (2 * k - 2)))
    return tau


def check_r0(r0: float, tau: float) -> Tuple[float, bool]:
    """``ϱ = 2r₀τ`` and whether ``ϱ < 1/2``."""
    varrho = 2.0 * r0 * tau
    return varrho, varrho < 0.5


def image_increment_check(model: RegressionModel, smoother: Smoother, local: LocalSet, theta,
                          omega_plus: Optional[float] = None, segment_points: int = 33) -> bool:
    """Check ``‖M̄(θ) − M̄(θ₀)‖² ≤ (1 + ω⁺)‖𝔻₀(θ − θ₀)‖²``.

    Without an explicit ``omega_plus`` the constant is certified on the segment
    from ``θ₀`` to ``θ``.
    """
    theta = np.asarray(theta, dtype=float)
    if not local.contains(theta):
        raise DomainError(f"theta lies outside the local set (norm {local.norm(theta):.6g} > r0={local.r0})")
    if omega_plus is None:
        s = np.linspace(0.0, 1.0, segment_points)[:, None]
        segment = local.theta0 + s * (theta - local.theta0)
        omega_plus, _ = check_grad_regularity(model, smoother, local, segment, directions=1)
    m_theta, _ = smoothed_map(model, smoother, theta)
    m_zero, _ = smoothed_map(model, smoother, local.theta0)
    lhs = float(np.sum((m_theta - m_zero) ** 2))
    rhs = (1.0 + omega_plus) * local.norm(theta) ** 2
    return lhs <= rhs * (1.0 + 1e-10) + 1e-14


def build_fixture(name: str, n: int = 100, p: int = 2, seed: int = 0,
                  x_max: float = 3.0) -> Tuple[RegressionModel, np.ndarray]:
    """Built-in regression fixtures and their true parameters.

    ``linear`` uses a Gaussian design with orthonormalized rows scaled by
    ``√n``; ``exp_decay`` and ``sine`` use ``n`` equispaced design points on
    ``[0, x_max]``.
    """
    if name == "linear":
        rng = np.random.default_rng(seed)
        q_mat, _ = np.linalg.qr(rng.standard_normal((n, p)))
        psi = math.sqrt(n) * q_mat.T / math.sqrt(p)
        theta_star = np.linspace(1.0, 0.5, p)
        return LinearModel(psi), theta_star
    x = np.linspace(0.0, x_max, n)
    if name == "exp_decay":
        return ExpDecayModel(x), np.array([1.0, 1.0])
    if name == "sine":
        return SineModel(x), np.array([2.0, 1.0])
    if name == "square":
        return SquareModel(), np.array([1.0])
    raise ValidationError(f"unknown fixture {name!r}", check="fixture")


FIXTURES = ("linear", "exp_decay", "sine", "square")


def load_design_csv(path) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Read design points (column ``x``) and optional ``weights`` from a CSV file."""
    table = _read_csv(path)
    if "x" not in table.dtype.names:
        raise ValidationError(f"{path}: missing column 'x'", check="columns")
    weights = table["weights"] if "weights" in table.dtype.names else None
    return np.atleast_1d(table["x"]).astype(float), (
        None if weights is None else np.atleast_1d(weights).astype(float))


def load_data_csv(path) -> Tuple[np.ndarray, np.ndarray]:
    """Read observations ``y`` and design points ``x`` from a CSV file."""
    table = _read_csv(path)
    missing = {"y", "x"} - set(table.dtype.names)
    if missing:
        raise ValidationError(f"{path}: missing columns {sorted(missing)}", check="columns")
    return np.atleast_1d(table["y"]).astype(float), np.atleast_1d(table["x"]).astype(float)


def _read_csv(path):
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"{path}: no such file", check="input file")
    try:
        table = np.genfromtxt(path, delimiter=",", names=True, dtype=float, encoding="utf-8")
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}", check="csv") from exc
    if table.dtype.names is None:
        raise ValidationError(f"{path}: missing header row", check="csv")
    if not all(np.all(np.isfinite(table[c])) for c in table.dtype.names):
        raise ValidationError(f"{path}: non-numeric or missing values", check="csv")
    return table


__all__ = [
    "RegressionModel",
    "LinearModel",
    "ExpDecayModel",
    "SineModel",
    "SquareModel",
    "SmootherKind",
    "Smoother",
    "LocalSet",
    "FIXTURES",
    "smoothed_map",
    "effective_sample_size",
    "sample_local_set",
    "check_phi_condition",
    "check_grad_regularity",
    "estimate_tau",
    "check_r0",
    "image_increment_check",
    "build_fixture",
    "load_design_csv",
    "load_data_csv",
]
