"""Block-Hessian tools for semiparametric estimation.

Everything here works with the *negative* Hessian ``𝓕 = −∇²f`` of an
objective ``f(θ, η)`` split into a target block ``θ`` (size p) and a nuisance
block ``η`` (size q)::

    𝓕 = [[Dtt, A ],
         [Aᵀ,  Hnn]]

The linear reparametrization ``η = τ − C(θ − θ*)`` with ``C = Hnn⁻¹Aᵀ``
removes the mixed second derivative at the reference point, and the
θθ-curvature becomes the Schur complement ``𝔻̆² = Dtt − A Hnn⁻¹ Aᵀ``.

All transforms are anchored at a caller-supplied reference point.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence, Tuple

import numpy as np
from scipy import linalg

from calmreg.exceptions import DomainError, NumericalError, ValidationError
from calmreg.linalg import check_psd, op_norm, psd_inv_sqrt, spd_solve

logger = logging.getLogger(__name__)

NU = 2.0 / 3.0
FD_REL_STEP = 1e-5
SANDWICH_TOL = 1e-10


@dataclass(frozen=True)
class BlockHessian:
    """Blocks of a symmetric ``(p+q) × (p+q)`` negative Hessian."""
    Dtt: np.ndarray
    A: np.ndarray
    Hnn: np.ndarray

    def __post_init__(self):
        Dtt, _ = check_psd(self.Dtt, "Dtt")
        Hnn, _ = check_psd(self.Hnn, "Hnn")
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.shape != (Dtt.shape[0], Hnn.shape[0]):
            raise ValidationError(f"cross block has shape {A.shape}, expected "
                                  f"({Dtt.shape[0]}, {Hnn.shape[0]})", check="dimensions")
        object.__setattr__(self, "Dtt", Dtt)
        object.__setattr__(self, "Hnn", Hnn)
        object.__setattr__(self, "A", A)

    @property
    def p(self) -> int:
        return self.Dtt.shape[0]

    @property
    def q(self) -> int:
        return self.Hnn.shape[0]

    @classmethod
    def from_full(cls, F, p: int) -> 'BlockHessian':
        F, _ = check_psd(F, "F_full")
        if not 0 < p < F.shape[0]:
            raise ValidationError(f"split p={p} outside (0, {F.shape[0]})", check="dimensions")
        return cls(F[:p, :p], F[:p, p:], F[p:, p:])

    def assemble(self) -> np.ndarray:
        return np.block([[self.Dtt, self.A], [self.A.T, self.Hnn]])

    def block_diagonal(self) -> np.ndarray:
        return linalg.block_diag(self.Dtt, self.Hnn)


@dataclass(frozen=True)
class OrthoTransform:
    """Nuisance reparametrization ``η = τ − C(θ − θ*)``."""
    C: np.ndarray
    D_eff_sq: np.ndarray
    rho: float
    theta_ref: np.ndarray = field(default=None, repr=False)

    def nuisance(self, theta, tau) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        ref = np.zeros_like(theta) if self.theta_ref is None else self.theta_ref
        return np.asarray(tau, dtype=float) - self.C @ (theta - ref)

    def anchored(self, theta_ref) -> 'OrthoTransform':
        return OrthoTransform(self.C, self.D_eff_sq, self.rho, np.asarray(theta_ref, dtype=float))


def separability_rho(blocks: BlockHessian) -> float:
    """``ρ = ‖Dtt^(−1/2) A Hnn⁻¹ Aᵀ Dtt^(−1/2)‖``."""
    d_inv = psd_inv_sqrt(blocks.Dtt)
    cross = d_inv @ blocks.A @ spd_solve(blocks.Hnn, blocks.A.T) @ d_inv
    return op_norm(cross)


def sandwich_check(F_full, blocks: BlockHessian, rho: float, tol: float = SANDWICH_TOL) -> bool:
    """Check ``(1 − √ρ)·block ⪯ 𝓕 ⪯ (1 + √ρ)·block``.

    The normalized matrix ``block^(−1/2) 𝓕 block^(−1/2)`` has eigenvalues
    ``1 ± sᵢ`` where ``sᵢ²`` are the eigenvalues whose largest is ``ρ``, so the
    factor ``1 ± √ρ`` is attained.
    """
    F = np.asarray(F_full, dtype=float)
    diag = blocks.block_diagonal()
    s = math.sqrt(max(rho, 0.0))
    scale = max(op_norm(diag), 1.0)
    lower = linalg.eigvalsh(F - (1.0 - s) * diag)[0]
    upper = linalg.eigvalsh((1.0 + s) * diag - F)[0]
    logger.debug(f"sandwich margins: lower={lower:.3e}, upper={upper:.3e}")
    return bool(lower >= -tol * scale and upper >= -tol * scale)


def orthogonalize(blocks: BlockHessian, theta_ref=None) -> OrthoTransform:
    """One-point orthogonalizing transform ``C = Hnn⁻¹Aᵀ``."""
    C = spd_solve(blocks.Hnn, blocks.A.T)
    D_eff_sq = blocks.Dtt - blocks.A @ C
    D_eff_sq = 0.5 * (D_eff_sq + D_eff_sq.T)
    rho = separability_rho(blocks)
    ref = None if theta_ref is None else np.asarray(theta_ref, dtype=float)
    return OrthoTransform(C, D_eff_sq, rho, ref)


def _fd_step(point: np.ndarray) -> float:
    return FD_REL_STEP * (1.0 + float(np.linalg.norm(point)))


def transformed_mixed_derivative(f: Callable[[np.ndarray, np.ndarray], float],
                                 transform: OrthoTransform, ref_point) -> np.ndarray:
    """Central-difference mixed block ``∇_θ∇_τ f̆`` at ``ref_point = (θ, η)``.

    ``f̆(θ, τ) = f(θ, τ − C(θ − θ_ref))`` with ``θ_ref`` the θ of ``ref_point``.
    """
    theta0 = np.asarray(ref_point[0], dtype=float)
    eta0 = np.asarray(ref_point[1], dtype=float)
    C = transform.C

    def f_breve(theta, tau):
        value = f(theta, tau - C @ (theta - theta0))
        if not np.isfinite(value):
            raise NumericalError(f"objective is not finite at theta={theta}")
        return float(value)

    h = _fd_step(np.concatenate([theta0, eta0]))
    p, q = theta0.size, eta0.size
    mixed = np.zeros((p, q))
    for i in range(p):
        ei = np.zeros(p)
        ei[i] = h
        for j in range(q):
            ej = np.zeros(q)
            ej[j] = h
            mixed[i, j] = (f_breve(theta0 + ei, eta0 + ej) - f_breve(theta0 + ei, eta0 - ej)
                           - f_breve(theta0 - ei, eta0 + ej) + f_breve(theta0 - ei, eta0 - ej)) / (4 * h * h)
    return mixed


def _fd_grad_hess(fn: Callable[[np.ndarray], float], x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    h = _fd_step(x)
    p = x.size
    f0 = fn(x)
    grad = np.zeros(p)
    hess = np.zeros((p, p))
    eye = np.eye(p) * h
    for i in range(p):
        fp, fm = fn(x + eye[i]), fn(x - eye[i])
        grad[i] = (fp - fm) / (2 * h)
        hess[i, i] = (fp - 2 * f0 + fm) / (h * h)
        for j in range(i):
            hess[i, j] = hess[j, i] = (fn(x + eye[i] + eye[j]) - fn(x + eye[i] - eye[j])
                                       - fn(x - eye[i] + eye[j]) + fn(x - eye[i] - eye[j])) / (4 * h * h)
    return grad, hess


def _inner_argmax(fn: Callable[[np.ndarray], float], start: np.ndarray,
                  max_iter: int = 50) -> np.ndarray:
    """Newton maximization with finite-difference derivatives."""
    theta = start.copy()
    step_norm = math.inf
    for _ in range(max_iter):
        grad, hess = _fd_grad_hess(fn, theta)
        lam = linalg.eigvalsh(hess)
        if lam[-1] >= 0:
            raise DomainError(f"objective is not concave in theta (max Hessian eigenvalue {lam[-1]:.3e})")
        step = -linalg.solve(hess, grad, assume_a="sym")
        theta = theta + step
        step_norm = float(np.linalg.norm(step))
        if step_norm <= 1e-10 * (1.0 + np.linalg.norm(theta)):
            return theta
    # finite-difference noise can stall the last digits
    if step_norm <= 1e-7 * (1.0 + np.linalg.norm(theta)):
        logger.warning(f"inner maximization stalled at step {step_norm:.3e}")
        return theta
    raise NumericalError(f"inner maximization did not converge in {max_iter} iterations")


def semiorthogonality_argmax_check(f: Callable[[np.ndarray, np.ndarray], float],
                                   transform: OrthoTransform, theta_ref,
                                   tau_samples: Sequence[np.ndarray]) -> float:
    """Largest ``‖argmax_θ f̆(θ, τ) − θ_ref‖`` over the sampled ``τ``."""
    theta_ref = np.asarray(theta_ref, dtype=float)
    C = transform.C
    worst = 0.0
    for tau in np.atleast_2d(np.asarray(tau_samples, dtype=float)):
        theta_hat = _inner_argmax(lambda th: float(f(th, tau - C @ (th - theta_ref))), theta_ref)
        worst = max(worst, float(np.linalg.norm(theta_hat - theta_ref)))
    return worst


def inverse_quadform(Q, D_sq) -> float:
    """``‖Q 𝔻⁻² Qᵀ‖``; equals 1 for ``Q = 𝔻``."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    return op_norm(Q @ spd_solve(np.asarray(D_sq, dtype=float), Q.T))


def semiparam_bias_bound(c3: float, r_bar: float, n_eff: float, F_inv_quadform: float,
                         nu: float = NU) -> float:
    """Bound on ``‖Q(θ*_G(η) − θ*_G)‖`` under one-point orthogonality."""
    if c3 < 0 or r_bar < 0 or n_eff <= 0 or F_inv_quadform < 0:
        raise DomainError("semiparametric bias inputs must be nonnegative with n_eff > 0")
    return c3 * r_bar ** 2 / (nu ** 2 * math.sqrt(n_eff)) * math.sqrt(F_inv_quadform)


class CompositeRho(NamedTuple):
    total: float
    direct: float
    rho_z: float
    rho_tau: float


def composite_rho(F_full, dims: Tuple[int, int, int]) -> CompositeRho:
    """Pairwise separability for a nuisance split into ``(z, τ)``.

    ``direct ≤ rho_z + rho_tau`` is guaranteed when the z-τ cross block
    vanishes; a violation is logged as a warning.
    """
    F, _ = check_psd(F_full, "F_full")
    p, q1, q2 = dims
    if p + q1 + q2 != F.shape[0] or min(dims) <= 0:
        raise ValidationError(f"partition {dims} does not match size {F.shape[0]}", check="dimensions")
    t, z, u = slice(0, p), slice(p, p + q1), slice(p + q1, p + q1 + q2)
    rho_z = separability_rho(BlockHessian(F[t, t], F[t, z], F[z, z]))
    rho_tau = separability_rho(BlockHessian(F[t, t], F[t, u], F[u, u]))
    direct = separability_rho(BlockHessian.from_full(F, p))
    total = rho_z + rho_tau
    if direct > total * (1.0 + 1e-10) + 1e-14:
        logger.warning(f"direct rho {direct:.6g} exceeds pairwise sum {total:.6g}; "
                       f"z-tau coupling {op_norm(F[z, u] @ F[u, z]) ** 0.5:.3g}")
    return CompositeRho(total, direct, rho_z, rho_tau)


def partial_quad_shift(blocks: BlockHessian, eta_dev) -> np.ndarray:
    """Exact ``θ_η − θ* = −Dtt⁻¹ A (η − η*)`` for a quadratic objective."""
    eta_dev = np.asarray(eta_dev, dtype=float)
    if eta_dev.shape != (blocks.q,):
        raise ValidationError(f"eta deviation has shape {eta_dev.shape}, expected ({blocks.q},)",
                              check="dimensions")
    return -spd_solve(blocks.Dtt, blocks.A @ eta_dev)


__all__ = [
    "NU",
    "BlockHessian",
    "OrthoTransform",
    "CompositeRho",
    "separability_rho",
    "sandwich_check",
    "orthogonalize",
    "transformed_mixed_derivative",
    "semiorthogonality_argmax_check",
    "inverse_quadform",
    "semiparam_bias_bound",
    "composite_rho",
    "partial_quad_shift",
]
