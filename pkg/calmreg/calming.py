"""Calmed extended likelihood, profile estimation and the bound evaluators.

The calmed log-likelihood of ``υ = (θ, η)`` is::

    L_G(θ, η) = −½‖Z − η‖² − ½‖M̄(θ) − η‖² − ½‖Gθ‖²

Its η-maximizer is the midpoint ``½(Z + M̄(θ))`` and the θ-profile reduces to
penalized least squares with a doubled penalty, ``‖Z − M̄(θ)‖² + 2‖Gθ‖²``.
``𝔾² = 2G²`` and ``𝔻_𝔾² = ∇M̄∇M̄ᵀ + 𝔾²`` are the information matrices of the
profile problem. The profile likelihood used for the Wilks expansion is
``𝕃(θ) = −½·profile_objective(θ)``, twice ``max_η L_G(θ, η)``, so that
``−∇²𝕃 = 𝔻_𝔾²`` for linear models.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, NamedTuple, Optional

import numpy as np

from calmreg.config import get_config
from calmreg.exceptions import DomainError, NumericalError, ValidationError
from calmreg.linalg import check_psd, psd_inv_sqrt, psd_sqrt, spd_solve
from calmreg.model import (LocalSet, RegressionModel, Smoother, check_grad_regularity, check_r0,
                           estimate_tau, sample_local_set, smoothed_map)
from calmreg.qform_bounds import spectrum_stats, z_quantile
from calmreg.semiparam import BlockHessian, orthogonalize

logger = logging.getLogger(__name__)

NU = 2.0 / 3.0
DEFAULT_X = 2.0


@dataclass(frozen=True)
class CalmedProblem:
    """Regression map, smoother, penalty and smoothed data ``Z = ΦY``."""
    model: RegressionModel
    smoother: Smoother
    G_sq: np.ndarray
    Z: np.ndarray
    local: Optional[LocalSet] = None

    def __post_init__(self):
        G_sq, _ = check_psd(self.G_sq, "G_sq")
        if G_sq.shape != (self.model.p, self.model.p):
            raise ValidationError(f"G_sq has shape {G_sq.shape}, expected ({self.model.p}, {self.model.p})",
                                  check="dimensions")
        if self.smoother.n != self.model.n:
            raise ValidationError(f"smoother has {self.smoother.n} columns, model has n={self.model.n}",
                                  check="dimensions")
        Z = np.asarray(self.Z, dtype=float)
        if Z.shape != (self.smoother.q,):
            raise ValidationError(f"Z has shape {Z.shape}, expected ({self.smoother.q},)", check="dimensions")
        if not np.all(np.isfinite(Z)):
            raise ValidationError("Z has non-finite entries", check="finite")
        object.__setattr__(self, "G_sq", G_sq)
        object.__setattr__(self, "Z", Z)

    @property
    def p(self) -> int:
        return self.model.p

    @property
    def q(self) -> int:
        return self.smoother.q

    @classmethod
    def from_observations(cls, model: RegressionModel, smoother: Smoother, G_sq, Y,
                          local: Optional[LocalSet] = None) -> 'CalmedProblem':
        return cls(model, smoother, G_sq, smoother.matrix @ np.asarray(Y, dtype=float), local)

    def with_data(self, Z) -> 'CalmedProblem':
        return replace(self, Z=np.asarray(Z, dtype=float))


@dataclass(frozen=True)
class ExtendedPoint:
    theta: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        eta = np.asarray(self.eta, dtype=float)
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(eta))):
            raise ValidationError("extended point has non-finite entries", check="finite")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "eta", eta)


@dataclass
class InfoPack:
    """Information matrices at a reference point.

    ``full_blocks`` holds the negative Hessian of ``L_G`` in ``(θ, η)``; its
    cross block is ``−∇M̄``.
    """
    D_sq: np.ndarray
    GG_sq: np.ndarray
    D_GG_sq: np.ndarray
    full_blocks: BlockHessian
    gn_approximated: bool = False
    grad: np.ndarray = field(default=None, repr=False)


@dataclass
class ScoreReport:
    xi_GG: Optional[np.ndarray] = None
    B_GG: Optional[np.ndarray] = None
    p_GG: Optional[float] = None
    r_GG: Optional[float] = None
    x: Optional[float] = None

    @property
    def xi_norm(self) -> float:
        if self.xi_GG is None:
            raise ValidationError("score report carries no effective score", check="xi_GG")
        return float(np.linalg.norm(self.xi_GG))


class FitResult(NamedTuple):
    theta: np.ndarray
    eta: np.ndarray
    trace: List[float]
    iterations: int
    grad_norm: float
    converged: bool


@dataclass(frozen=True)
class CalmingConstants:
    """Certified constants feeding the Fisher, Wilks and bias bounds."""
    c3: float
    c4: float
    tau: float
    varrho: float
    omega_plus: float = 0.0
    r0: float = math.inf
    nu: float = NU
    tau4: float = 0.0

    @property
    def conditions_met(self) -> bool:
        return self.varrho < 0.5 and self.omega_plus < 1.0


@dataclass
class FisherWilksReport:
    fisher_residual: float
    fisher_bound: float
    wilks_residual: float
    wilks_bound: float
    omega_GG: float
    xi_norm: float
    conditions_met: bool

    @property
    def fisher_ok(self) -> bool:
        return self.fisher_residual <= self.fisher_bound * (1.0 + 1e-9) + 1e-10

    @property
    def wilks_ok(self) -> bool:
        return self.wilks_residual <= self.wilks_bound * (1.0 + 1e-9) + 1e-10

    @property
    def fisher_ratio(self) -> float:
        """Fisher residual relative to ``‖ξ_𝔾‖``."""
        return _ratio(self.fisher_residual, self.xi_norm)

    @property
    def wilks_ratio(self) -> float:
        """Wilks residual relative to ``‖ξ_𝔾‖²``."""
        return _ratio(self.wilks_residual, self.xi_norm ** 2)

    @property
    def fisher_factor(self) -> float:
        """Fisher bound relative to ``‖ξ_𝔾‖``; constant across noise draws."""
        return _ratio(self.fisher_bound, self.xi_norm)

    @property
    def wilks_factor(self) -> float:
        return _ratio(self.wilks_bound, self.xi_norm ** 2)


@dataclass
class BiasRiskReport:
    bias_vec_approx: np.ndarray
    bias_norm_bound: float
    delta_star: float
    risk_prediction: float
    b_GG: float
    valid: bool


def _ratio(residual: float, bound: float) -> float:
    if bound == 0.0:
        return 0.0 if residual <= 1e-10 else math.inf
    return residual / bound


def extended_loglik(prob: CalmedProblem, pt: ExtendedPoint) -> float:
    m_bar, _ = smoothed_map(prob.model, prob.smoother, pt.theta)
    if pt.eta.shape != (prob.q,):
        raise ValidationError(f"eta has shape {pt.eta.shape}, expected ({prob.q},)", check="dimensions")
    return float(-0.5 * np.sum((prob.Z - pt.eta) ** 2) - 0.5 * np.sum((m_bar - pt.eta) ** 2)
                 - 0.5 * pt.theta @ prob.G_sq @ pt.theta)


def eta_partial(prob: CalmedProblem, theta) -> np.ndarray:
    """Exact maximizer of ``L_G(θ, ·)``: the midpoint of ``Z`` and ``M̄(θ)``."""
    m_bar, _ = smoothed_map(prob.model, prob.smoother, theta)
    return 0.5 * (prob.Z + m_bar)


def profile_objective(prob: CalmedProblem, theta) -> float:
    """``‖Z − M̄(θ)‖² + 2‖Gθ‖²``."""
    theta = np.asarray(theta, dtype=float)
    m_bar, _ = smoothed_map(prob.model, prob.smoother, theta)
    return float(np.sum((prob.Z - m_bar) ** 2) + 2.0 * theta @ prob.G_sq @ theta)


def profile_gradient(prob: CalmedProblem, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    m_bar, grad = smoothed_map(prob.model, prob.smoother, theta)
    return -2.0 * grad @ (prob.Z - m_bar) + 4.0 * prob.G_sq @ theta


def gauss_newton_step(prob: CalmedProblem, theta) -> np.ndarray:
    """``θ + (∇M̄∇M̄ᵀ + 2G²)⁻¹[∇M̄(Z − M̄(θ)) − 2G²θ]``."""
    theta = np.asarray(theta, dtype=float)
    m_bar, grad = smoothed_map(prob.model, prob.smoother, theta)
    normal = grad @ grad.T + 2.0 * prob.G_sq
    rhs = grad @ (prob.Z - m_bar) - 2.0 * prob.G_sq @ theta
    return theta + spd_solve(normal, rhs)


def _line_search(objective, theta, direction, value, slope, solver) -> Optional[tuple]:
    alpha = 1.0
    for _ in range(solver.max_backtracks):
        candidate = theta + alpha * direction
        trial = objective(candidate)
        if np.isfinite(trial) and trial <= value + solver.armijo_c1 * alpha * slope:
            return candidate, trial
        alpha *= solver.backtrack_factor
    return None


def fit_profile(prob: CalmedProblem, theta_init, tol: Optional[float] = None,
                max_iter: Optional[int] = None) -> FitResult:
    """Gauss-Newton with Armijo backtracking on ``profile_objective``.

    Stops when ``‖∇ profile_objective‖ ≤ tol·(1 + ‖Z‖)``. Hitting
    ``max_iter`` is flagged through ``converged=False``.
    """
    solver = get_config().solver
    tol = solver.tol if tol is None else tol
    max_iter = solver.max_iter if max_iter is None else max_iter
    theta = np.asarray(theta_init, dtype=float).copy()
    if prob.local is not None and not prob.local.contains(theta):
        logger.warning("initial guess lies outside the local set")

    value = profile_objective(prob, theta)
    if not np.isfinite(value):
        raise NumericalError(f"profile objective is not finite at theta_init={theta}")
    trace = [value]
    threshold = tol * (1.0 + float(np.linalg.norm(prob.Z)))
    grad_norm = float(np.linalg.norm(profile_gradient(prob, theta)))
    iterations = 0
    while grad_norm > threshold and iterations < max_iter:
        direction = gauss_newton_step(prob, theta) - theta
        slope = float(profile_gradient(prob, theta) @ direction)
        accepted = _line_search(lambda t: profile_objective(prob, t), theta, direction, value, slope, solver)
        if accepted is None:
            logger.debug(f"line search stalled at iteration {iterations}, gradient {grad_norm:.3e}")
            break
        theta, value = accepted
        trace.append(value)
        iterations += 1
        grad_norm = float(np.linalg.norm(profile_gradient(prob, theta)))

    converged = grad_norm <= threshold
    if not converged:
        logger.warning(f"fit_profile stopped after {iterations} iterations with gradient {grad_norm:.3e}")
    return FitResult(theta, eta_partial(prob, theta), trace, iterations, grad_norm, converged)


def fit_joint(prob: CalmedProblem, init: ExtendedPoint, tol: Optional[float] = None,
              max_iter: Optional[int] = None) -> ExtendedPoint:
    """Block-coordinate ascent on ``L_G``: exact η-step, then a damped GN θ-step."""
    solver = get_config().solver
    tol = solver.tol if tol is None else tol
    max_iter = solver.max_iter if max_iter is None else max_iter
    threshold = tol * (1.0 + float(np.linalg.norm(prob.Z)))
    theta = init.theta.copy()
    eta = eta_partial(prob, theta)

    def neg_loglik(t):
        return -extended_loglik(prob, ExtendedPoint(t, eta)) if np.all(np.isfinite(t)) else math.inf

    for iteration in range(max_iter):
        m_bar, grad = smoothed_map(prob.model, prob.smoother, theta)
        score = grad @ (eta - m_bar) - prob.G_sq @ theta
        # with η at the midpoint the score is −¼ of the profile gradient
        if 4.0 * np.linalg.norm(score) <= threshold:
            break
        direction = spd_solve(grad @ grad.T + prob.G_sq, score)
        accepted = _line_search(neg_loglik, theta, direction, neg_loglik(theta),
                                -float(score @ direction), solver)
        if accepted is None:
            logger.debug(f"joint line search stalled at iteration {iteration}")
            break
        theta = accepted[0]
        eta = eta_partial(prob, theta)
    else:
        if max_iter:
            logger.warning(f"fit_joint hit max_iter={max_iter}")
    return ExtendedPoint(theta, eta)


def population_target(prob: CalmedProblem, m_star, theta_init=None) -> ExtendedPoint:
    """``(θ*_G, η*_G)`` from the noiseless problem ``Z = Φm*``."""
    m_star = np.asarray(m_star, dtype=float)
    if m_star.shape != (prob.model.n,):
        raise ValidationError(f"m_star has shape {m_star.shape}, expected ({prob.model.n},)",
                              check="dimensions")
    noiseless = prob.with_data(prob.smoother.matrix @ m_star)
    if theta_init is None:
        theta_init = prob.local.theta0 if prob.local is not None else np.zeros(prob.p)
    fit = fit_profile(noiseless, theta_init)
    if not fit.converged:
        raise NumericalError(f"population target did not converge (gradient {fit.grad_norm:.3e})")
    return ExtendedPoint(fit.theta, fit.eta)


def info_pack(prob: CalmedProblem, theta_ref, eta=None) -> InfoPack:
    """Information matrices at ``θ_ref``.

    ``η`` defaults to ``eta_partial(θ_ref)``. The θθ-block of the full
    Hessian carries ``Σⱼ(M̄ⱼ − ηⱼ)∇²M̄ⱼ`` when the model has analytic
    Hessians; otherwise it is the Gauss-Newton approximation and
    ``gn_approximated`` is set.
    """
    theta_ref = np.asarray(theta_ref, dtype=float)
    m_bar, grad = smoothed_map(prob.model, prob.smoother, theta_ref)
    eta = eta_partial(prob, theta_ref) if eta is None else np.asarray(eta, dtype=float)
    D_sq = grad @ grad.T
    GG_sq = 2.0 * prob.G_sq
    theta_block = D_sq + prob.G_sq
    hessians = prob.model.hessians(theta_ref) if prob.model.has_hessians else None
    if hessians is not None:
        weights = prob.smoother.matrix.T @ (m_bar - eta)
        theta_block = theta_block + np.einsum("i,ikl->kl", weights, hessians)
    try:
        blocks = BlockHessian(theta_block, -grad, 2.0 * np.eye(prob.q))
    except ValidationError as exc:
        raise NumericalError(f"full information is not positive semidefinite at theta={theta_ref}") from exc
    return InfoPack(D_sq, GG_sq, D_sq + GG_sq, blocks, gn_approximated=hessians is None, grad=grad)


def effective_score(prob: CalmedProblem, theta_star_G, eps_smoothed,
                    info: Optional[InfoPack] = None) -> ScoreReport:
    """``ξ_𝔾 = 𝔻_𝔾⁻¹∇M̄(θ*_G)Φε`` with ``𝔻_𝔾`` the PSD square root of ``𝔻_𝔾²``."""
    info = info_pack(prob, theta_star_G) if info is None else info
    eps_smoothed = np.asarray(eps_smoothed, dtype=float)
    if eps_smoothed.shape != (prob.q,):
        raise ValidationError(f"smoothed noise has shape {eps_smoothed.shape}, expected ({prob.q},)",
                              check="dimensions")
    return ScoreReport(xi_GG=psd_inv_sqrt(info.D_GG_sq) @ (info.grad @ eps_smoothed))


def effective_dimension(prob: CalmedProblem, theta_star_G, V_sq, x: float = DEFAULT_X,
                        info: Optional[InfoPack] = None) -> ScoreReport:
    """``𝔹_𝔾``, ``𝚙_𝔾 = tr 𝔹_𝔾`` and the norm quantile ``r_𝔾`` at level ``x``."""
    info = info_pack(prob, theta_star_G) if info is None else info
    V_sq, _ = check_psd(V_sq, "V_sq")
    if V_sq.shape != (prob.q, prob.q):
        raise ValidationError(f"V_sq has shape {V_sq.shape}, expected ({prob.q}, {prob.q})",
                              check="dimensions")
    inv_root = psd_inv_sqrt(info.D_GG_sq)
    B = inv_root @ info.grad @ V_sq @ info.grad.T @ inv_root
    B = 0.5 * (B + B.T)
    r_GG = z_quantile(spectrum_stats(B), x).z
    return ScoreReport(B_GG=B, p_GG=float(np.trace(B)), r_GG=r_GG, x=x)


def smoothness_constants(varrho: float, omega_plus: float):
    """``(c₃, c₄)`` so that the calmed likelihood has ``τ₃ = c₃τ`` and ``τ₄ = c₄τ²``."""
    if not 0 <= varrho < 0.5:
        raise DomainError(f"varrho must lie in [0, 1/2), got {varrho}")
    if not 0 <= omega_plus < 1:
        raise DomainError(f"omega_plus must lie in [0, 1), got {omega_plus}")
    c3 = 16.0 / ((1.0 - 2.0 * varrho) ** 1.5 * (1.0 - omega_plus) ** 3)
    c4 = 42.0 / ((1.0 - 2.0 * varrho) ** 2 * (1.0 - omega_plus) ** 4)
    return c3, c4


def full_dim_radius(V_sq, x: float, varrho: float) -> float:
    if not 0 <= varrho < 0.5:
        raise DomainError(f"varrho must lie in [0, 1/2), got {varrho}")
    return math.sqrt((1.0 - varrho) / (1.0 - 2.0 * varrho)) * z_quantile(spectrum_stats(V_sq), x).z


def concentration_radius(r_bar: float, varrho: float, nu: float = NU) -> float:
    if not 0 <= varrho < 0.5:
        raise DomainError(f"varrho must lie in [0, 1/2), got {varrho}")
    return math.sqrt(2.0 / (1.0 - 2.0 * varrho)) * r_bar / nu


def semiparametric_information(info: InfoPack) -> np.ndarray:
    """θθ-curvature after orthogonalizing η: ``𝒟_θθ − ½∇M̄∇M̄ᵀ``."""
    return orthogonalize(info.full_blocks).D_eff_sq


def calming_constants(prob: CalmedProblem, theta_ref, V_sq, x: float = DEFAULT_X,
                      rng: Optional[np.random.Generator] = None) -> CalmingConstants:
    """Certify ``ω⁺`` and ``τ`` on a local set sized by the concentration radius.

    The radius is ``r₀ = √2·ν⁻¹·z(𝔙², x)``; ``τ`` is the larger of the
    order-2 and order-3 certificates and enters ``ϱ`` and ``c₃``, while the
    order-4 certificate is kept as ``tau4`` for ``c₄``. Constants that are
    undefined because ``ϱ ≥ 1/2`` or ``ω⁺ ≥ 1`` are returned as ``inf``.
    """
    checks = get_config().conditions
    rng = rng if rng is not None else np.random.default_rng(0)
    r0 = math.sqrt(2.0) * z_quantile(spectrum_stats(V_sq), x).z / checks.nu
    local = LocalSet.around(prob.model, prob.smoother, theta_ref, r0, checks.c_ring)
    samples = sample_local_set(local, rng, checks.theta_samples)
    omega_plus, _ = check_grad_regularity(prob.model, prob.smoother, local, samples,
                                          checks.directions, rng)
    taus = {k: estimate_tau(prob.model, prob.smoother, local, k, samples, checks.directions, rng)
            for k in (2, 3, 4)}
    tau = max(taus[2], taus[3])
    varrho, passed = check_r0(r0, tau)
    if passed and omega_plus < 1.0:
        c3, c4 = smoothness_constants(varrho, omega_plus)
    else:
        c3 = c4 = math.inf
    logger.debug(f"calming constants: r0={r0:.4g} tau={tau:.4g} varrho={varrho:.4g} "
                 f"omega_plus={omega_plus:.4g} c3={c3:.4g}")
    return CalmingConstants(c3, c4, tau, varrho, omega_plus, r0, checks.nu, taus[4])


def _omega(consts: CalmingConstants, radius: float) -> float:
    if consts.tau == 0.0:
        return 0.0
    return consts.c3 * consts.tau * radius / consts.nu


def fisher_wilks_report(prob: CalmedProblem, theta_tilde, theta_star_G, score: ScoreReport,
                        consts: CalmingConstants, info: Optional[InfoPack] = None) -> FisherWilksReport:
    """Fisher and Wilks residuals against their finite-sample bounds.

    ``ω_𝔾 = ν⁻¹c₃τr_𝔾``. Bounds are infinite when ``ω_𝔾 ≥ 1`` or
    ``ϱ ≥ 1/2``; ``conditions_met`` requires ``ω_𝔾 ≤ 1/3`` and ``ϱ < 1/2``.
    """
    info = info_pack(prob, theta_star_G) if info is None else info
    theta_tilde = np.asarray(theta_tilde, dtype=float)
    theta_star_G = np.asarray(theta_star_G, dtype=float)
    xi = score.xi_GG
    xi_norm = score.xi_norm
    radius = score.r_GG if score.r_GG is not None else xi_norm
    omega = _omega(consts, radius)
    varrho = consts.varrho

    fisher_residual = float(np.linalg.norm(psd_sqrt(info.D_GG_sq) @ (theta_tilde - theta_star_G) - xi))
    wilks_residual = abs(profile_objective(prob, theta_star_G) - profile_objective(prob, theta_tilde)
                         - xi_norm ** 2)
    if omega < 1.0 and varrho < 0.5:
        fisher_bound = 2.0 * (math.sqrt(2.0 * omega) + varrho) / (1.0 - 2.0 * varrho) * xi_norm
        wilks_bound = xi_norm ** 2 * (omega / (1.0 - omega) + varrho / (1.0 - 2.0 * varrho))
    else:
        fisher_bound = wilks_bound = math.inf
    return FisherWilksReport(fisher_residual, fisher_bound, wilks_residual, wilks_bound,
                             omega, xi_norm, omega <= 1.0 / 3.0 and varrho < 0.5)


def bias_and_risk_bounds(prob: CalmedProblem, theta_star, consts: CalmingConstants, score: ScoreReport,
                         info: Optional[InfoPack] = None) -> BiasRiskReport:
    """Penalization bias and the bias-variance risk prediction.

    The bias term uses the doubled penalty ``𝔾²θ* = 2G²θ*``:
    ``bias ≈ −𝔻_𝔾⁻²𝔾²θ*`` and ``risk ≈ 𝚙_𝔾 + ‖𝔻_𝔾⁻¹𝔾²θ*‖²``.
    """
    theta_star = np.asarray(theta_star, dtype=float)
    info = info_pack(prob, theta_star) if info is None else info
    if score.p_GG is None:
        raise ValidationError("score report carries no effective dimension", check="p_GG")
    penalty_push = info.GG_sq @ theta_star
    b_GG = float(np.linalg.norm(psd_inv_sqrt(info.D_GG_sq) @ penalty_push))
    bias = -spd_solve(info.D_GG_sq, penalty_push) if b_GG > 0 else np.zeros_like(theta_star)
    delta_star = _omega(consts, b_GG)
    xi_size = score.xi_norm if score.xi_GG is not None else score.r_GG
    delta = _omega(consts, score.r_GG if score.r_GG is not None else xi_size)
    if delta_star < 1.0:
        norm_bound = (1.0 + delta) * xi_size + b_GG / (1.0 - delta_star)
    else:
        norm_bound = math.inf
    valid = delta_star <= 1.0 / 3.0
    if not valid:
        logger.info(f"bias bound conditions unmet: delta_star={delta_star:.4g}")
    return BiasRiskReport(bias, norm_bound, delta_star, score.p_GG + b_GG ** 2, b_GG, valid)


__all__ = [
    "NU",
    "DEFAULT_X",
    "CalmedProblem",
    "ExtendedPoint",
    "InfoPack",
    "ScoreReport",
    "FitResult",
    "CalmingConstants",
    "FisherWilksReport",
    "BiasRiskReport",
    "extended_loglik",
    "eta_partial",
    "profile_objective",
    "profile_gradient",
    "gauss_newton_step",
    "fit_profile",
    "fit_joint",
    "population_target",
    "info_pack",
    "effective_score",
    "effective_dimension",
    "smoothness_constants",
    "full_dim_radius",
    "concentration_radius",
    "semiparametric_information",
    "calming_constants",
    "fisher_wilks_report",
    "bias_and_risk_bounds",
]
