"""Deviation quantiles and exponential-moment bounds for quadratic forms.

All bounds concern ``‖Qξ‖²`` for a random vector ``ξ`` with variance proxy
``𝔙²`` and are expressed through the spectrum of ``B = Q𝔙²Qᵀ``:

* ``dim_a = tr B``, the effective dimension,
* ``v2 = tr B²``,
* ``b_norm = ‖B‖``, the operator norm.

Two thresholds appear throughout. The quadratic-form threshold

    z_sq(x) = tr B + 2·√(x·tr B²) + 2x·‖B‖

bounds ``‖Qξ‖²`` with probability ``1 − e⁻ˣ`` for Gaussian (and sub-gaussian)
``ξ``. The norm threshold

    z(x) = √tr B + √(2x·‖B‖)

is its looser square-root companion and is the one used to locate the
crossover level ``x_c`` of the light exponential tail regime.
"""

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np
from scipy import optimize

from calmreg.config import get_config
from calmreg.exceptions import DomainError, NoCrossoverError, NumericalError, ValidationError
from calmreg.linalg import check_psd

logger = logging.getLogger(__name__)

_REL = 1e-9


@dataclass(frozen=True)
class SpectrumStats:
    """Trace, trace-square and operator norm of a PSD operator ``B``."""
    dim_a: float
    v2: float
    b_norm: float

    def __post_init__(self):
        a, v2, b = float(self.dim_a), float(self.v2), float(self.b_norm)
        if not all(math.isfinite(t) for t in (a, v2, b)):
            raise ValidationError("spectrum statistics must be finite", check="finite")
        if min(a, v2, b) < 0:
            raise ValidationError(f"negative statistic in ({a}, {v2}, {b})", check="nonnegative")
        slack = _REL * max(1.0, a, v2)
        if b > a + slack:
            raise ValidationError(f"b_norm={b} exceeds dim_a={a}", check="b_norm <= dim_a")
        if b * b > v2 + slack or v2 > b * a + slack:
            raise ValidationError(f"v2={v2} outside [b_norm², b_norm·dim_a] = [{b * b}, {b * a}]",
                                  check="b_norm² <= v2 <= b_norm·dim_a")
        if a > 0 and b == 0:
            raise ValidationError("dim_a > 0 requires b_norm > 0", check="b_norm > 0")

    @property
    def v(self) -> float:
        return math.sqrt(self.v2)

    @classmethod
    def identity(cls, p: int) -> 'SpectrumStats':
        """Statistics of ``I_p``."""
        return cls(float(p), float(p), 1.0 if p > 0 else 0.0)


class Quantile(NamedTuple):
    z_sq: float
    z: float


class LowerTail(NamedTuple):
    threshold: float
    vacuous: bool


@dataclass(frozen=True)
class ExpTailSolution:
    """Crossover between the Gaussian and the exponential tail regime."""
    x_c: float
    mu_c: float
    g_c: float
    g: float


def spectrum_stats(B) -> SpectrumStats:
    """Compute ``(tr B, tr B², ‖B‖)`` from the symmetric eigendecomposition of ``B``.

    Raises:
        ValidationError: if ``B`` is not symmetric or has an eigenvalue below
            ``−1e-10·‖B‖``.
    """
    _, eigvals = check_psd(B, "B")
    lam = np.clip(eigvals, 0.0, None)
    if lam.size == 0:
        return SpectrumStats(0.0, 0.0, 0.0)
    return SpectrumStats(float(lam.sum()), float(np.sum(lam ** 2)), float(lam[-1]))


def normalize_stats(stats: SpectrumStats) -> Tuple[SpectrumStats, float]:
    """Rescale ``B → B/‖B‖`` and return the normalized statistics with the scale."""
    if stats.b_norm <= 0:
        raise DomainError("cannot normalize a zero operator")
    s = stats.b_norm
    return SpectrumStats(stats.dim_a / s, stats.v2 / (s * s), 1.0), s


def z_quantile(stats: SpectrumStats, x: float) -> Quantile:
    """Upper deviation thresholds at level ``x``.

    ``z_sq`` is the scale-consistent quadratic-form threshold
    ``tr B + 2√(x·tr B²) + 2x‖B‖``; ``z`` is the norm threshold
    ``√tr B + √(2x‖B‖)``.
    """
    if not x >= 0:
        raise DomainError(f"x must be nonnegative, got {x}")
    z_sq = stats.dim_a + 2.0 * math.sqrt(x * stats.v2) + 2.0 * x * stats.b_norm
    z = math.sqrt(stats.dim_a) + math.sqrt(2.0 * x * stats.b_norm)
    return Quantile(z_sq, z)


def gaussian_tail_level(stats: SpectrumStats, t: float) -> float:
    """Largest ``x`` with ``z_sq(x) ≤ t``; the bound ``P(‖Qξ‖² > t) ≤ e^(−x)`` follows.

    Returns 0 when ``t ≤ tr B`` (no nontrivial bound).
    """
    excess = t - stats.dim_a
    if excess <= 0:
        return 0.0
    v, b = stats.v, stats.b_norm
    if b == 0:
        return math.inf
    root = (-v + math.sqrt(v * v + 2.0 * b * excess)) / (2.0 * b)
    return root * root


def exp_moment_bound(stats: SpectrumStats, mu: float) -> float:
    """Sub-gaussian bound on ``E exp(μ‖Qξ‖²/2)``.

    ``exp(μ²·tr B²/(4(1 − μ‖B‖)) + μ·tr B/2)`` for ``0 < μ < 1/‖B‖``.
    """
    limit = math.inf if stats.b_norm == 0 else 1.0 / stats.b_norm
    if not 0 < mu < limit:
        raise DomainError(f"mu must lie in (0, {limit}), got {mu}")
    exponent = mu * mu * stats.v2 / (4.0 * (1.0 - stats.b_norm * mu)) + mu * stats.dim_a / 2.0
    return math.exp(exponent)


def gaussian_det_moment(B, mu: float) -> float:
    """Exact Gaussian moment ``E exp(μ‖QX‖²/2) = det(I − μB)^(−1/2)``.

    Nonpositive ``μ`` gives the lower-tail moment ``det(I + |μ|B)^(−1/2)``.
    """
    _, eigvals = check_psd(B, "B")
    lam = np.clip(eigvals, 0.0, None)
    b_norm = float(lam[-1]) if lam.size else 0.0
    if mu > 0 and mu * b_norm >= 1.0:
        raise DomainError(f"mu·‖B‖ = {mu * b_norm} must be below 1")
    return float(np.exp(-0.5 * np.sum(np.log1p(-mu * lam))))


def mu_of_x(stats: SpectrumStats, x: float) -> float:
    """Tilt ``μ(x) = (1 + v/(2√x))⁻¹``, strictly increasing from 0 to 1."""
    if not x > 0:
        raise DomainError(f"x must be positive, got {x}")
    return 1.0 / (1.0 + stats.v / (2.0 * math.sqrt(x)))


def crossover_sides(g: float, stats: SpectrumStats, x: float) -> Tuple[float, float]:
    """Both sides of the crossover equation at ``x``; ``solve_xc`` finds where they meet."""
    mu = mu_of_x(stats, x)
    lhs = (g - math.sqrt(stats.dim_a * mu)) / mu
    rhs = z_quantile(stats, x).z + 1.0
    return lhs, rhs


def _require_normalized(stats: SpectrumStats) -> None:
    if abs(stats.b_norm - 1.0) > 1e-12:
        raise ValidationError(f"stats must be normalized to ‖B‖ = 1 (got {stats.b_norm}); "
                              "use normalize_stats", check="b_norm == 1")


def solve_xc(g: float, stats: SpectrumStats) -> ExpTailSolution:
    """Locate the crossover level ``x_c``.

    ``x_c`` is the root of ``(g − √(dim_a·μ(x)))/μ(x) = z(B, x) + 1`` with the
    norm threshold ``z``. The left side decreases and the right side increases
    in ``x``, so the root is unique when it exists.

    Raises:
        ValidationError: stats not normalized to ``‖B‖ = 1``.
        DomainError: ``g ≤ √dim_a``, or the crossover leaves ``g_c < 1``
            where the exponential tail bound is not available.
        NoCrossoverError: no sign change on the configured bracket.
    """
    _require_normalized(stats)
    if not g > math.sqrt(stats.dim_a):
        raise DomainError(f"g={g} must exceed sqrt(dim_a)={math.sqrt(stats.dim_a)}")
    cfg = get_config().bisection

    def residual(x: float) -> float:
        lhs, rhs = crossover_sides(g, stats, x)
        return lhs - rhs

    r_lo, r_hi = residual(cfg.bracket_lo), residual(cfg.bracket_hi)
    if not (r_lo > 0 > r_hi):
        raise NoCrossoverError(f"no crossover on [{cfg.bracket_lo}, {cfg.bracket_hi}] for g={g}: "
                               f"residuals {r_lo:.3e}, {r_hi:.3e}")
    x_c = optimize.brentq(residual, cfg.bracket_lo, cfg.bracket_hi,
                          xtol=1e-14, rtol=8 * np.finfo(float).eps, maxiter=cfg.max_iter)
    res = residual(x_c)
    if abs(res) > cfg.xc_tol:
        raise NumericalError(f"x_c residual {res:.3e} above tolerance {cfg.xc_tol}")

    lo, hi = x_c * (1 - 1e-6), x_c * (1 + 1e-6)
    lhs_lo, rhs_lo = crossover_sides(g, stats, lo)
    lhs_hi, rhs_hi = crossover_sides(g, stats, hi)
    if not (lhs_lo > lhs_hi and rhs_lo < rhs_hi):
        raise NumericalError(f"crossover bracket around x_c={x_c} is not monotone")

    mu_c = mu_of_x(stats, x_c)
    g_c = g - math.sqrt(stats.dim_a * mu_c)
    logger.debug(f"solve_xc: g={g} dim_a={stats.dim_a} -> x_c={x_c:.10g} mu_c={mu_c:.6g} g_c={g_c:.6g}")
    if g_c < 1.0:
        raise DomainError(f"g={g} gives g_c={g_c:.6g} below 1 at x_c={x_c:.6g}")
    return ExpTailSolution(x_c=x_c, mu_c=mu_c, g_c=g_c, g=g)


def zc_quantile(sol: ExpTailSolution, stats: SpectrumStats, x: float) -> float:
    """Piecewise norm quantile of the light exponential tail regime.

    ``√(dim_a + 2v√x + 2x)`` up to ``x_c``, then the linear continuation
    ``g_c/μ_c + 2(x − x_c)/g_c``. At ``x_c`` the exponential branch starts at
    ``z(B, x_c) + 1``.
    """
    _require_normalized(stats)
    if not x > 0:
        raise DomainError(f"x must be positive, got {x}")
    if sol.g_c < 1.0:
        raise DomainError(f"g_c must be at least 1, got {sol.g_c}")
    if x <= sol.x_c:
        return math.sqrt(stats.dim_a + 2.0 * stats.v * math.sqrt(x) + 2.0 * x)
    return sol.g_c / sol.mu_c + 2.0 * (x - sol.x_c) / sol.g_c


def exp_tail_probability_bound(sol: ExpTailSolution, x: float) -> float:
    """Refined tail probability ``2e⁻ˣ + e^(−x_c)·1(x < x_c)``, never above ``3e⁻ˣ``."""
    bound = 2.0 * math.exp(-x)
    if x < sol.x_c:
        bound += math.exp(-sol.x_c)
    return bound


def min_g_for_gaussian_regime(stats: SpectrumStats, x: float) -> float:
    """Smallest ``g`` for which ``P(‖Qξ‖ ≥ √dim_a + √(2x)) ≤ 3e⁻ˣ`` holds."""
    if not x > 0:
        raise DomainError(f"x must be positive, got {x}")
    return math.sqrt(x) / 2.0 + (stats.dim_a * x / 4.0) ** 0.25


def lower_tail_threshold(stats: SpectrumStats, x: float) -> LowerTail:
    """Lower deviation threshold ``tr B − 2√(x·tr B²)``; nonpositive values are vacuous."""
    if not x > 0:
        raise DomainError(f"x must be positive, got {x}")
    threshold = stats.dim_a - 2.0 * math.sqrt(x * stats.v2)
    return LowerTail(threshold, threshold <= 0)


__all__ = [
    "SpectrumStats",
    "Quantile",
    "LowerTail",
    "ExpTailSolution",
    "spectrum_stats",
    "normalize_stats",
    "z_quantile",
    "gaussian_tail_level",
    "exp_moment_bound",
    "gaussian_det_moment",
    "mu_of_x",
    "crossover_sides",
    "solve_xc",
    "zc_quantile",
    "exp_tail_probability_bound",
    "min_g_for_gaussian_regime",
    "lower_tail_threshold",
]
