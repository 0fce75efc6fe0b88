"""Penalty-weight selection along the path ``𝔾_w² = w·G₀²``."""

import functools
import logging
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from calmreg.exceptions import DomainError, ValidationError
from calmreg.linalg import check_psd, psd_inv_sqrt, spd_solve

logger = logging.getLogger(__name__)

DEFAULT_BRACKET = (1e-6, 1e6)


@dataclass(frozen=True)
class PenaltyPath:
    """Linearized design ``A`` (q × p), smoothness operator ``G₀²`` and noise level."""
    A: np.ndarray
    G0_sq: np.ndarray
    sigma_sq: float = 1.0
    w_grid: Optional[np.ndarray] = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        G0_sq, _ = check_psd(self.G0_sq, "G0_sq")
        if G0_sq.shape[0] != A.shape[1]:
            raise ValidationError(f"G0_sq is {G0_sq.shape[0]}x{G0_sq.shape[0]}, design has p={A.shape[1]}",
                                  check="dimensions")
        if not self.sigma_sq > 0:
            raise ValidationError(f"sigma_sq must be positive, got {self.sigma_sq}", check="sigma_sq > 0")
        if self.w_grid is not None:
            grid = np.asarray(self.w_grid, dtype=float)
            if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
                raise ValidationError("w_grid must be positive and strictly increasing", check="w_grid")
            object.__setattr__(self, "w_grid", grid)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "G0_sq", G0_sq)

    @classmethod
    def from_gram(cls, gram, G0_sq, sigma_sq: float = 1.0, w_grid=None) -> 'PenaltyPath':
        """Path whose design has ``AᵀA = gram``."""
        gram, _ = check_psd(gram, "gram")
        lam, V = np.linalg.eigh(gram)
        return cls(np.sqrt(np.clip(lam, 0.0, None))[:, None] * V.T, G0_sq, sigma_sq, w_grid)

    @property
    def gram(self) -> np.ndarray:
        return self.A.T @ self.A

    @property
    def p_w(self) -> np.ndarray:
        if self.w_grid is None:
            raise ValidationError("path has no w_grid", check="w_grid")
        return np.array([effective_dim_w(self, w) for w in self.w_grid])

    def is_strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.p_w) < 0))


class PenaltySelection(NamedTuple):
    w_star: float
    risk: float
    fallback: bool = False


class RiskPoint(NamedTuple):
    w: float
    p_w: float
    risk: float


def effective_dim_w(path: PenaltyPath, w: float) -> float:
    """``p_w = σ²·tr{AᵀA(AᵀA + wG₀²)⁻¹}``."""
    if not w > 0:
        raise DomainError(f"w must be positive, got {w}")
    gram = path.gram
    return path.sigma_sq * float(np.trace(spd_solve(gram + w * path.G0_sq, gram)))


def _risk_proxy(path: PenaltyPath, log_w: float) -> float:
    w = math.exp(log_w)
    return effective_dim_w(path, w) + w


def _is_unimodal(values: np.ndarray) -> bool:
    steps = np.sign(np.diff(values))
    steps = steps[steps != 0]
    # at most one change from decreasing to increasing
    turns = np.count_nonzero(np.diff(steps) != 0)
    return turns == 0 or (turns == 1 and steps[0] < 0)


def select_w_risk(path: PenaltyPath, bracket: Tuple[float, float] = DEFAULT_BRACKET,
                  max_iter: int = 200, coarse_points: int = 64) -> PenaltySelection:
    """Minimize the risk proxy ``p_w + w`` by golden section on ``log w``.

    The proxy bounds the bias by ``w‖G₀θ*‖² ≤ w``. A coarse log grid locates
    the basin; if it shows more than one local minimum the search falls back
    to a dense grid and ``fallback`` is set.
    """
    lo, hi = bracket
    if not 0 < lo < hi:
        raise DomainError(f"bracket must satisfy 0 < lo < hi, got {bracket}")
    s_grid = np.linspace(math.log(lo), math.log(hi), coarse_points)
    values = np.array([_risk_proxy(path, s) for s in s_grid])
    if not _is_unimodal(values):
        logger.warning("risk proxy is not unimodal on the bracket; using a dense grid")
        dense = np.linspace(math.log(lo), math.log(hi), 20_001)
        dense_values = np.array([_risk_proxy(path, s) for s in dense])
        k = int(np.argmin(dense_values))
        return PenaltySelection(math.exp(dense[k]), float(dense_values[k]), True)
    k = int(np.argmin(values))
    left = s_grid[max(k - 1, 0)]
    right = s_grid[min(k + 1, coarse_points - 1)]
    proxy = functools.partial(_risk_proxy, path)
    if 0 < k < coarse_points - 1 and values[k] < min(values[k - 1], values[k + 1]):
        result = optimize.minimize_scalar(proxy, bracket=(left, s_grid[k], right), method="golden",
                                          options={"xtol": 1e-9, "maxiter": max_iter})
    else:
        # minimum sits on the bracket edge or a flat stretch
        result = optimize.minimize_scalar(proxy, bounds=(left, right), method="bounded",
                                          options={"xatol": 1e-9, "maxiter": max_iter})
    w_star = math.exp(float(result.x))
    logger.debug(f"select_w_risk: w*={w_star:.8g}")
    return PenaltySelection(w_star, effective_dim_w(path, w_star) + w_star)


def select_w_balance(path: PenaltyPath, C0: float, rtol: float = 1e-12) -> float:
    """Largest ``w`` with ``w ≤ C₀·p_w``, by bisection on ``w − C₀·p_w``."""
    if not C0 > 0:
        raise DomainError(f"C0 must be positive, got {C0}")

    def gap(w: float) -> float:
        return w - C0 * effective_dim_w(path, w)

    lo, hi = 1.0, 1.0
    while gap(lo) >= 0:
        lo *= 0.5
    while gap(hi) < 0:
        hi *= 2.0
    return float(optimize.bisect(gap, lo, hi, xtol=1e-300, rtol=rtol, maxiter=400))


def risk_curve(path: PenaltyPath, w_grid: Optional[Sequence[float]] = None) -> List[RiskPoint]:
    grid = path.w_grid if w_grid is None else np.asarray(w_grid, dtype=float)
    if grid is None:
        raise ValidationError("no w grid supplied", check="w_grid")
    points = []
    for w in grid:
        p_w = effective_dim_w(path, float(w))
        points.append(RiskPoint(float(w), p_w, p_w + float(w)))
    return points


def oracle_risk_w(path: PenaltyPath, w: float, theta_star) -> float:
    """Exact linear-model risk ``p_w + ‖𝔻_w⁻¹wG₀²θ*‖²`` with ``𝔻_w² = AᵀA + wG₀²``."""
    theta_star = np.asarray(theta_star, dtype=float)
    D_w_sq = path.gram + w * path.G0_sq
    bias = psd_inv_sqrt(D_w_sq) @ (w * path.G0_sq @ theta_star)
    return effective_dim_w(path, w) + float(bias @ bias)


__all__ = [
    "PenaltyPath",
    "PenaltySelection",
    "RiskPoint",
    "effective_dim_w",
    "select_w_risk",
    "select_w_balance",
    "risk_curve",
    "oracle_risk_w",
]
