"""Tilted cumulants of scalar noise laws and the sharp sub-gaussian bound terms.

For a centered scalar law ``X`` with log-moment function ``φ(t) = log E e^(tX)``
the tilted measure ``P_t`` has density ``e^(tX − φ(t))``, and

    φ′ = E_t X,  φ″ = E_t (X − E_t X)²,  φ‴ = third centered tilted moment,
    φ⁽⁴⁾ = fourth centered tilted moment − 3(φ″)².

The smallness constants ``τ₃``, ``τ₄`` are the suprema of ``|φ‴|`` and
``|φ⁽⁴⁾|`` over ``0 ≤ t ≤ g``. They vanish for Gaussian laws. Multivariate
product laws reduce to this 1-D computation along coordinates.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np
from scipy import optimize

from calmreg.exceptions import ConditionsUnmetError, DomainError, RangeError, ValidationError
from calmreg.qform_bounds import SpectrumStats, gaussian_tail_level

logger = logging.getLogger(__name__)

_EXP_LIMIT = 700.0
_SQRT3 = math.sqrt(3.0)
# log(sinh u / u) = sum c_k u^(2k)
_LOGSINHC = (1.0 / 6.0, -1.0 / 180.0, 1.0 / 2835.0, -1.0 / 37800.0, 1.0 / 467775.0)


class LawKind(Enum):
    """Built-in scalar noise laws."""
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"
    CENTERED_UNIFORM = "centered_uniform"
    TABULATED = "tabulated"


@dataclass(frozen=True)
class ScalarLaw:
    """Centered scalar law with variance at most one.

    Analytic kinds are the standard law scaled by ``√variance``. Tabulated
    laws carry probability masses on a grid of points.
    """
    kind: LawKind
    variance: float = 1.0
    points: Optional[np.ndarray] = field(default=None, repr=False)
    masses: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind is LawKind.TABULATED:
            if self.points is None or self.masses is None:
                raise ValidationError("tabulated law needs points and masses", check="grid")
            pts = np.asarray(self.points, dtype=float)
            m = np.asarray(self.masses, dtype=float)
            if pts.shape != m.shape or pts.ndim != 1:
                raise ValidationError("points and masses must be 1-D of equal length", check="grid")
            if np.any(m < 0):
                raise ValidationError("masses must be nonnegative", check="weights >= 0")
            if abs(m.sum() - 1.0) > 1e-10:
                raise ValidationError(f"masses sum to {m.sum()!r}", check="normalization")
            mean = float(m @ pts)
            if abs(mean) > 1e-10:
                raise ValidationError(f"law has mean {mean!r}", check="centered")
            var = float(m @ pts ** 2)
            object.__setattr__(self, "points", pts)
            object.__setattr__(self, "masses", m)
            object.__setattr__(self, "variance", var)
        if not 0 < self.variance <= 1.0 + 1e-12:
            raise ValidationError(f"variance must lie in (0, 1], got {self.variance}",
                                  check="standardized")

    @property
    def scale(self) -> float:
        return math.sqrt(self.variance)

    @property
    def support_radius(self) -> float:
        if self.kind is LawKind.GAUSSIAN:
            return math.inf
        if self.kind is LawKind.RADEMACHER:
            return self.scale
        if self.kind is LawKind.CENTERED_UNIFORM:
            return _SQRT3 * self.scale
        return float(np.max(np.abs(self.points)))

    @classmethod
    def gaussian(cls, variance: float = 1.0) -> 'ScalarLaw':
        return cls(LawKind.GAUSSIAN, variance)

    @classmethod
    def rademacher(cls, variance: float = 1.0) -> 'ScalarLaw':
        return cls(LawKind.RADEMACHER, variance)

    @classmethod
    def centered_uniform(cls, variance: float = 1.0) -> 'ScalarLaw':
        """Uniform on ``[−√(3·variance), √(3·variance)]``."""
        return cls(LawKind.CENTERED_UNIFORM, variance)

    @classmethod
    def tabulated(cls, points, weights, density: bool = False) -> 'ScalarLaw':
        """Law on a grid.

        With ``density=True`` the weights are density values and are turned
        into masses with trapezoid weights, then renormalized.
        """
        pts = np.asarray(points, dtype=float)
        w = np.asarray(weights, dtype=float)
        if density:
            if pts.size < 2 or np.any(np.diff(pts) <= 0):
                raise ValidationError("density grid must be strictly increasing", check="grid")
            trap = np.zeros_like(pts)
            dx = np.diff(pts)
            trap[:-1] += dx / 2.0
            trap[1:] += dx / 2.0
            w = w * trap
            w = w / w.sum()
        return cls(LawKind.TABULATED, 1.0, pts, w)


class Cumulants(NamedTuple):
    phi: float
    d1: float
    d2: float
    d3: float
    d4: float


@dataclass(frozen=True)
class TiltedSummary:
    """Suprema of the tilted third and fourth cumulants on ``[0, g]``."""
    g: float
    tau3: float
    tau4: float
    subg_const: float


@dataclass(frozen=True)
class SharpBoundTerms:
    x_mu: float
    eps_mu: float
    omega: float
    diamond4: float
    rho_mu: float
    delta_mu: float


def _logcosh_derivs(u: float) -> Cumulants:
    """Derivatives of ``log cosh u``."""
    T = math.tanh(u)
    s2 = 1.0 - T * T
    phi = abs(u) + math.log1p(math.exp(-2.0 * abs(u))) - math.log(2.0)
    return Cumulants(phi, T, s2, -2.0 * T * s2, s2 * (6.0 * T * T - 2.0))


def _logsinhc_derivs(u: float, a: float) -> Cumulants:
    """Derivatives in ``t`` of ``log(sinh(at)/(at))`` at ``u = at``."""
    if abs(u) < 0.1:
        c = _LOGSINHC
        phi = sum(ck * u ** (2 * k + 2) for k, ck in enumerate(c))
        d1 = sum(ck * (2 * k + 2) * u ** (2 * k + 1) for k, ck in enumerate(c))
        d2 = sum(ck * (2 * k + 2) * (2 * k + 1) * u ** (2 * k) for k, ck in enumerate(c))
        d3 = sum(ck * (2 * k + 2) * (2 * k + 1) * (2 * k) * u ** (2 * k - 1)
                 for k, ck in enumerate(c) if k >= 1)
        d4 = sum(ck * (2 * k + 2) * (2 * k + 1) * (2 * k) * (2 * k - 1) * u ** (2 * k - 2)
                 for k, ck in enumerate(c) if k >= 1)
        return Cumulants(phi, a * d1, a ** 2 * d2, a ** 3 * d3, a ** 4 * d4)
    phi = abs(u) + math.log1p(-math.exp(-2.0 * abs(u))) - math.log(2.0 * abs(u))
    if abs(u) > 20.0:
        # hyperbolic corrections are below double precision here
        d1 = math.copysign(1.0, u) - 1.0 / u
        return Cumulants(phi, a * d1, a ** 2 / u ** 2, -2.0 * a ** 3 / u ** 3, 6.0 * a ** 4 / u ** 4)
    sh, ch = math.sinh(u), math.cosh(u)
    d1 = ch / sh - 1.0 / u
    d2 = 1.0 / u ** 2 - 1.0 / sh ** 2
    d3 = -2.0 / u ** 3 + 2.0 * ch / sh ** 3
    d4 = 6.0 / u ** 4 + 2.0 * (sh ** 2 - 3.0 * ch ** 2) / sh ** 4
    return Cumulants(phi, a * d1, a ** 2 * d2, a ** 3 * d3, a ** 4 * d4)


def _tabulated_derivs(law: ScalarLaw, t: float) -> Cumulants:
    x = law.points
    logw = np.log(np.where(law.masses > 0, law.masses, 1.0)) + t * x
    logw = np.where(law.masses > 0, logw, -np.inf)
    top = float(np.max(logw))
    w = np.exp(logw - top)
    total = float(w.sum())
    p = w / total
    m1 = float(p @ x)
    c = x - m1
    c2 = float(p @ c ** 2)
    c3 = float(p @ c ** 3)
    c4 = float(p @ c ** 4)
    return Cumulants(top + math.log(total), m1, c2, c3, c4 - 3.0 * c2 * c2)


def tilted_cumulants(law: ScalarLaw, t: float) -> Cumulants:
    """Return ``(φ, φ′, φ″, φ‴, φ⁽⁴⁾)`` at ``t``.

    Raises:
        RangeError: if ``|t·x|`` exceeds 700 on the support.
    """
    if not math.isfinite(t):
        raise DomainError(f"t must be finite, got {t}")
    if abs(t) * law.support_radius > _EXP_LIMIT:
        raise RangeError(f"e^(t·x) overflows for t={t} on support radius {law.support_radius}")
    s = law.scale
    if law.kind is LawKind.GAUSSIAN:
        v = law.variance
        return Cumulants(v * t * t / 2.0, v * t, v, 0.0, 0.0)
    if law.kind is LawKind.RADEMACHER:
        base = _logcosh_derivs(s * t)
        return Cumulants(base.phi, s * base.d1, s ** 2 * base.d2, s ** 3 * base.d3, s ** 4 * base.d4)
    if law.kind is LawKind.CENTERED_UNIFORM:
        a = _SQRT3 * s
        return _logsinhc_derivs(a * t, a)
    return _tabulated_derivs(law, t)


def _grid_sup(fn, grid: np.ndarray) -> float:
    """Supremum of ``fn`` on ``grid`` refined by a bounded search around the best node."""
    values = np.array([fn(t) for t in grid])
    i = int(np.argmax(values))
    best = float(values[i])
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(lambda t: -fn(t), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12})
        best = max(best, float(-res.fun))
    return best


def tau34(law: ScalarLaw, g: float, grid_size: int = 256) -> TiltedSummary:
    """Compute ``τ₃ = sup|φ‴|``, ``τ₄ = sup|φ⁽⁴⁾|`` on ``[0, g]`` and the sub-gaussian constant.

    The sub-gaussian constant is the smallest ``𝙲`` with ``φ(t) ≤ 𝙲t²/2`` on
    ``|t| ≤ g``; its ``t → 0`` limit is the variance.
    """
    if not g > 0:
        raise DomainError(f"g must be positive, got {g}")
    if grid_size < 64:
        raise DomainError(f"grid_size must be at least 64, got {grid_size}")
    grid = np.linspace(0.0, g, grid_size)
    if law.kind is LawKind.GAUSSIAN:
        return TiltedSummary(g=g, tau3=0.0, tau4=0.0, subg_const=law.variance)

    tau3 = _grid_sup(lambda t: abs(tilted_cumulants(law, t).d3), grid)
    tau4 = _grid_sup(lambda t: abs(tilted_cumulants(law, t).d4), grid)

    def ratio(t: float) -> float:
        if t == 0.0:
            return tilted_cumulants(law, 0.0).d2
        return 2.0 * tilted_cumulants(law, t).phi / (t * t)

    sym_grid = np.concatenate([-grid[:0:-1], grid])
    subg = _grid_sup(ratio, sym_grid)
    logger.debug(f"tau34: kind={law.kind.value} g={g} -> tau3={tau3:.6g} tau4={tau4:.6g} C={subg:.6g}")
    return TiltedSummary(g=g, tau3=tau3, tau4=tau4, subg_const=subg)


def iid_tau_scaling(tau3_one: float, tau4_one: float, n: int):
    """Scale single-observation constants to a sum of ``n`` i.i.d. terms."""
    if n < 1:
        raise DomainError(f"n must be at least 1, got {n}")
    return tau3_one / math.sqrt(n), tau4_one / n


def diamond4_general(dim_mu: float, alpha_mu: float, tau3: float, tau4: float,
                     omega: float) -> float:
    """Remainder ``{τ₃²(dim_μ + 2α_μ)³ + 2τ₄(dim_μ + α_μ)²}/(16(1 − ω)²)``."""
    if not omega < 1:
        raise DomainError(f"omega must be below 1, got {omega}")
    return (tau3 ** 2 * (dim_mu + 2 * alpha_mu) ** 3
            + 2 * tau4 * (dim_mu + alpha_mu) ** 2) / (16.0 * (1.0 - omega) ** 2)


def sharp_bound_terms(kdens: float, dim_q: float, mu: float, g: float,
                      tau3: float, tau4: float) -> SharpBoundTerms:
    """Ingredients of the sharp sub-gaussian deviation bound.

    Args:
        kdens: sub-gaussian constant 𝙲.
        dim_q: ``tr(QᵀQ)``.
        mu: tilt in (0, 1).
        g: exponential-moment radius.
        tau3, tau4: tilted cumulant suprema.

    Raises:
        ConditionsUnmetError: listing each failed condition among
            ``𝙲μ ≤ 1/3``, ``μ⁻¹g² ≥ 9𝙲·dim_Q`` and ``gτ₃/2 ≤ 1/3``.
    """
    if not 0 < mu < 1:
        raise DomainError(f"mu must lie in (0, 1), got {mu}")
    if not (kdens > 0 and g > 0 and dim_q >= 0):
        raise DomainError("kdens and g must be positive, dim_q nonnegative")
    omega = g * tau3 / 2.0
    failed = []
    if kdens * mu > 1.0 / 3.0:
        failed.append(f"C·mu = {kdens * mu:.6g} > 1/3")
    if g * g / mu < 9.0 * kdens * dim_q:
        failed.append(f"g²/mu = {g * g / mu:.6g} < 9·C·dim_Q = {9.0 * kdens * dim_q:.6g}")
    if omega > 1.0 / 3.0:
        failed.append(f"omega = g·tau3/2 = {omega:.6g} > 1/3")
    if failed:
        raise ConditionsUnmetError(failed)

    x_mu = 0.25 * (math.sqrt(g * g / (mu * kdens)) - math.sqrt(dim_q)) ** 2
    eps_mu = kdens * mu + (kdens * mu * math.sqrt(dim_q / x_mu) if dim_q > 0 else 0.0)
    diamond4 = diamond4_general(mu * dim_q / (1.0 - mu), mu / (1.0 - mu), tau3, tau4, omega)

    b = min(1.0, dim_q) if dim_q > 0 else 0.0
    worst = SpectrumStats(dim_q, b * dim_q, b)
    x_star = gaussian_tail_level(worst, (1.0 - mu) * g * g / mu)
    rho_mu = math.exp(-x_star) if math.isfinite(x_star) else 0.0

    remainder = math.exp(kdens * mu * dim_q / 2.0 - (1.0 - eps_mu) * x_mu) / (1.0 - eps_mu)
    delta_mu = diamond4 + rho_mu + remainder
    return SharpBoundTerms(x_mu=x_mu, eps_mu=eps_mu, omega=omega, diamond4=diamond4,
                           rho_mu=rho_mu, delta_mu=delta_mu)


def iid_delta_bound(x: float, dim_q: float, n: int, c_scale: float = 1.0) -> float:
    """Rate ``c·x^(3/2)·dim_Q^(3/2)/n`` of the i.i.d. sharp bound."""
    if n < 1:
        raise DomainError(f"n must be at least 1, got {n}")
    return c_scale * x ** 1.5 * dim_q ** 1.5 / n


def sample_law(law: ScalarLaw, rng: np.random.Generator, size) -> np.ndarray:
    """Draw from ``law``."""
    s = law.scale
    if law.kind is LawKind.GAUSSIAN:
        return s * rng.standard_normal(size)
    if law.kind is LawKind.RADEMACHER:
        return s * (2.0 * rng.integers(0, 2, size=size) - 1.0)
    if law.kind is LawKind.CENTERED_UNIFORM:
        return s * rng.uniform(-_SQRT3, _SQRT3, size=size)
    return rng.choice(law.points, size=size, p=law.masses)


__all__ = [
    "LawKind",
    "ScalarLaw",
    "Cumulants",
    "TiltedSummary",
    "SharpBoundTerms",
    "tilted_cumulants",
    "tau34",
    "iid_tau_scaling",
    "diamond4_general",
    "sharp_bound_terms",
    "iid_delta_bound",
    "sample_law",
]
