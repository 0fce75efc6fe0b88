"""Small dense symmetric linear algebra used across the package."""

import logging
from typing import Tuple

import numpy as np
from scipy import linalg

from calmreg.exceptions import NumericalError, ValidationError

logger = logging.getLogger(__name__)

SYM_TOL = 1e-10
PSD_TOL = 1e-10


def as_square(B, name: str = "B") -> np.ndarray:
    """Return ``B`` as a 2-D float array, rejecting non-square or non-finite input."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {B.shape}", check="shape")
    if not np.all(np.isfinite(B)):
        raise ValidationError(f"{name} has non-finite entries", check="finite")
    return B


def check_psd(B, name: str = "B", tol: float = PSD_TOL) -> Tuple[np.ndarray, np.ndarray]:
    """Validate a symmetric PSD matrix.

    Returns the symmetrized matrix and its ascending eigenvalues. Symmetry is
    checked relative to the largest entry, definiteness relative to ``‖B‖``.
    """
    B = as_square(B, name)
    scale = max(1.0, float(np.max(np.abs(B))) if B.size else 1.0)
    asym = float(np.max(np.abs(B - B.T))) if B.size else 0.0
    if asym > SYM_TOL * scale:
        raise ValidationError(f"{name} is not symmetric (max |B - B^T| = {asym:.3e})",
                              check="symmetry")
    B = 0.5 * (B + B.T)
    eigvals = linalg.eigvalsh(B) if B.size else np.zeros(0)
    norm = float(np.max(np.abs(eigvals))) if eigvals.size else 0.0
    if eigvals.size and eigvals[0] < -tol * max(norm, 1.0):
        raise ValidationError(f"{name} is indefinite (min eigenvalue {eigvals[0]:.3e})",
                              check="psd")
    return B, eigvals


def psd_power(B: np.ndarray, power: float, floor: float = 0.0) -> np.ndarray:
    """Symmetric matrix power through the eigendecomposition.

    Negative powers require eigenvalues above ``floor``; the PSD square root
    (power 1/2) clips tiny negative rounding to zero.
    """
    B = 0.5 * (B + B.T)
    w, V = linalg.eigh(B)
    if power < 0:
        if w.size and w[0] <= floor:
            raise NumericalError(f"matrix is singular (min eigenvalue {w[0]:.3e})")
    else:
        w = np.clip(w, 0.0, None)
    return (V * w ** power) @ V.T


def psd_sqrt(B: np.ndarray) -> np.ndarray:
    return psd_power(B, 0.5)


def psd_inv_sqrt(B: np.ndarray) -> np.ndarray:
    return psd_power(B, -0.5)


def spd_solve(A: np.ndarray, b: np.ndarray, rel_floor: float = 1e-12) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite ``A``.

    Raises :class:`NumericalError` naming the smallest eigenvalue when it is
    below ``rel_floor * trace(A)``.
    """
    A = 0.5 * (A + A.T)
    lam_min = float(linalg.eigvalsh(A)[0])
    trace = float(np.trace(A))
    if not lam_min > rel_floor * max(trace, np.finfo(float).tiny):
        raise NumericalError(f"normal matrix is singular: lambda_min = {lam_min:.3e}, "
                             f"trace = {trace:.3e}")
    return linalg.solve(A, b, assume_a="pos")


def op_norm(B: np.ndarray) -> float:
    """Operator norm of a symmetric matrix."""
    if B.size == 0:
        return 0.0
    w = linalg.eigvalsh(0.5 * (B + B.T))
    return float(max(abs(w[0]), abs(w[-1])))


def random_psd(rng: np.random.Generator, p: int, rank: int = None) -> np.ndarray:
    """Random PSD matrix ``W W^T`` with Gaussian ``W`` of shape (p, rank)."""
    rank = p if rank is None else rank
    W = rng.standard_normal((p, rank))
    return W @ W.T


__all__ = [
    "as_square",
    "check_psd",
    "psd_power",
    "psd_sqrt",
    "psd_inv_sqrt",
    "spd_solve",
    "op_norm",
    "random_psd",
]
