"""Closed-form identities for quadratic objectives.

``g(υ) = value0 − ½(υ − υ*)ᵀF(υ − υ*)`` is the reference quadratic. These
identities are exact and serve as ground truth for the iterative solvers.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Tuple

import numpy as np
from scipy import optimize

from calmreg.exceptions import DomainError, NumericalError, ValidationError
from calmreg.linalg import check_psd, psd_sqrt, spd_solve

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuadObjective:
    F: np.ndarray
    center: np.ndarray
    value0: float = 0.0

    def __post_init__(self):
        F, eigvals = check_psd(self.F, "F")
        if eigvals.size and eigvals[0] <= 1e-12 * max(eigvals[-1], 1e-300):
            raise NumericalError(f"F is singular (min eigenvalue {eigvals[0]:.3e})")
        center = np.asarray(self.center, dtype=float)
        if center.shape != (F.shape[0],):
            raise ValidationError(f"center has shape {center.shape}, expected ({F.shape[0]},)",
                                  check="dimensions")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "center", center)

    @property
    def dim(self) -> int:
        return self.F.shape[0]

    def __call__(self, ups) -> float:
        d = np.asarray(ups, dtype=float) - self.center
        return float(self.value0 - 0.5 * d @ self.F @ d)

    def gradient(self, ups) -> np.ndarray:
        return -self.F @ (np.asarray(ups, dtype=float) - self.center)


def linear_perturb_shift(q: QuadObjective, A) -> Tuple[np.ndarray, float]:
    """Maximizer shift and gain of ``g(υ) + ⟨A, υ⟩``: ``F⁻¹A`` and ``½‖F^(−1/2)A‖²``."""
    A = np.asarray(A, dtype=float)
    shift = spd_solve(q.F, A)
    return shift, 0.5 * float(A @ shift)


def quad_penalty_bias(q: QuadObjective, G_sq) -> Tuple[np.ndarray, float]:
    """Penalty-induced shift ``−F_G⁻¹G²υ*`` and gain ``½‖F_G^(−1/2)G²υ*‖²``.

    Here ``f_G(υ) = g(υ) − ½‖Gυ‖²`` and ``F_G = F + G²``.
    """
    G_sq, _ = check_psd(G_sq, "G_sq")
    push = G_sq @ q.center
    solved = spd_solve(q.F + G_sq, push)
    return -solved, 0.5 * float(push @ solved)


class FisherWilksBrackets(NamedTuple):
    wilks_lo: float
    wilks_hi: float
    fisher_resid: float
    norm_hi: float
    fisher_valid: bool


def fisher_wilks_brackets(omega: float, xi_norm: float) -> FisherWilksBrackets:
    """Brackets for a locally quadratic function with defect ``ω``.

    ``wilks_lo ≤ 2g(ῠ) − 2g(υ*) − ‖ξ‖² ≤ wilks_hi``; ``fisher_resid`` bounds
    ``‖D(ῠ − υ*) − D⁻¹A‖`` (valid for ``ω ≤ 1/3``, see ``fisher_valid``);
    ``norm_hi`` bounds ``‖D(ῠ − υ*)‖``.
    """
    if not 0 <= omega < 1:
        raise DomainError(f"omega must lie in [0, 1), got {omega}")
    if xi_norm < 0:
        raise DomainError(f"xi_norm must be nonnegative, got {xi_norm}")
    xi_sq = xi_norm ** 2
    return FisherWilksBrackets(
        wilks_lo=-omega / (1.0 + omega) * xi_sq,
        wilks_hi=omega / (1.0 - omega) * xi_sq,
        fisher_resid=math.sqrt(3.0 * omega / (1.0 - omega) ** 2) * xi_norm,
        norm_hi=(1.0 + math.sqrt(2.0 * omega)) / (1.0 - omega) * xi_norm,
        fisher_valid=omega <= 1.0 / 3.0,
    )


def maximize(g: Callable[[np.ndarray], float], start, grad: Callable = None,
             hess: Callable = None) -> np.ndarray:
    """Numerical maximizer of ``g``.

    Uses an exact trust-region method on ``−g`` when both derivatives are
    given and BFGS otherwise.
    """
    start = np.asarray(start, dtype=float)
    jac = None if grad is None else (lambda u: -np.asarray(grad(u), dtype=float))
    if jac is not None and hess is not None:
        result = optimize.minimize(lambda u: -g(u), start, jac=jac,
                                   hess=lambda u: -np.asarray(hess(u), dtype=float),
                                   method="trust-exact", options={"gtol": 1e-13, "maxiter": 1000})
    else:
        result = optimize.minimize(lambda u: -g(u), start, jac=jac, method="BFGS",
                                   options={"gtol": 1e-12, "maxiter": 10_000})
    if not np.all(np.isfinite(result.x)):
        raise NumericalError(f"optimizer failed: {result.message}")
    if not result.success:
        logger.debug(f"optimizer stopped early: {result.message}")
    return result.x


def measured_omega(g: Callable[[np.ndarray], float], q: QuadObjective, r: float,
                   rng: np.random.Generator, directions: int = 200) -> float:
    """Local quadraticity defect of ``g`` around the maximizer of ``q``.

    With ``δ(u) = g(υ* + u) − g(υ*) − ⟨∇g(υ*), u⟩ + ½‖Du‖²`` the defect is the
    largest ``2|δ(u)|/‖Du‖²`` over sampled ``u`` in the ball ``‖Du‖ ≤ r``,
    where ``D² = F``.
    """
    center = q.center
    h = 1e-6 * (1.0 + np.linalg.norm(center))
    eye = np.eye(q.dim) * h
    grad0 = np.array([(g(center + e) - g(center - e)) / (2 * h) for e in eye])
    g0 = g(center)
    D_inv = np.linalg.inv(psd_sqrt(q.F))
    worst = 0.0
    for _ in range(directions):
        z = rng.standard_normal(q.dim)
        radius = r * rng.uniform() ** (1.0 / q.dim)
        z *= radius / np.linalg.norm(z)
        u = D_inv @ z
        delta = g(center + u) - g0 - grad0 @ u + 0.5 * radius ** 2
        worst = max(worst, 2.0 * abs(delta) / radius ** 2)
    return worst


def concentration_check(g: Callable[[np.ndarray], float], q: QuadObjective, A, nu: float, r: float,
                        grad: Callable = None) -> bool:
    """Maximize ``g + ⟨A, ·⟩`` and check ``‖F^(1/2)(ῠ − υ*)‖ ≤ r``.

    Only meaningful when ``‖F^(−1/2)A‖ ≤ ν·r``; otherwise the premise fails
    and a :class:`DomainError` is raised.
    """
    A = np.asarray(A, dtype=float)
    if not 0 < nu <= 1 or not r > 0:
        raise DomainError(f"need 0 < nu <= 1 and r > 0, got nu={nu}, r={r}")
    score_norm = math.sqrt(float(A @ spd_solve(q.F, A)))
    if score_norm > nu * r * (1.0 + 1e-12):
        raise DomainError(f"premise fails: ||F^(-1/2)A|| = {score_norm:.6g} > nu*r = {nu * r:.6g}")
    perturbed_grad = None if grad is None else (lambda u: np.asarray(grad(u)) + A)
    ups = maximize(lambda u: g(u) + float(A @ u), q.center, perturbed_grad)
    d = ups - q.center
    return math.sqrt(max(float(d @ q.F @ d), 0.0)) <= r * (1.0 + 1e-9)


__all__ = [
    "QuadObjective",
    "FisherWilksBrackets",
    "linear_perturb_shift",
    "quad_penalty_bias",
    "fisher_wilks_brackets",
    "maximize",
    "measured_omega",
    "concentration_check",
]
