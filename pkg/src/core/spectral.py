"""
Dense linear-algebra kernels used by every other module.

Thin wrappers around ``scipy.linalg`` that pin down the conventions the rest
of the toolkit relies on: ascending eigenvalues with a fixed eigenvector sign,
descending singular values, a relative truncation rule for the pseudoinverse
and column-stacking vectorization.
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg

from src.core.config_manager import config
from src.core.errors import ColumnMismatch, DimensionMismatch, LengthMismatch, NonSymmetric

logger = logging.getLogger(__name__)

# Relative slack used to decide that two eigenvector entries tie in magnitude.
_SIGN_TIE_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class EigPair:
    """Eigenvectors ``V`` (columns) and ascending eigenvalues ``lam`` of a symmetric matrix."""

    V: np.ndarray
    lam: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.V * self.lam) @ self.V.T


class SvdTriple(NamedTuple):
    U: np.ndarray
    sigma: np.ndarray
    Z: np.ndarray


def as_finite_matrix(M, name: str = "matrix") -> np.ndarray:
    M = np.asarray_chkfinite(M, dtype=float)
    if M.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {M.shape}")
    return M


def fix_signs(V: np.ndarray) -> np.ndarray:
    """Flip columns so the entry of largest magnitude (first one on ties) is positive."""
    V = np.array(V, dtype=float, copy=True)
    if V.size == 0:
        return V
    mags = np.abs(V)
    peak = mags.max(axis=0)
    pivots = np.argmax(mags >= peak * (1.0 - _SIGN_TIE_RTOL), axis=0)
    signs = np.sign(V[pivots, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def sym_evd(M, sym_tol: Optional[float] = None) -> EigPair:
    M = as_finite_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"Eigendecomposition needs a square matrix, got {M.shape}")
    sym_tol = config.get_tolerance("evd_symmetry") if sym_tol is None else sym_tol

    norm = np.linalg.norm(M)
    if norm > 0:
        asym = np.linalg.norm(M - M.T) / norm
        if asym > sym_tol:
            raise NonSymmetric(f"Relative asymmetry {asym:.3e} exceeds {sym_tol:.1e}")

    lam, V = scipy.linalg.eigh(0.5 * (M + M.T))
    return EigPair(V=fix_signs(V), lam=lam)


def svd(M) -> SvdTriple:
    """Economy-size SVD ``M = U diag(sigma) Z^T`` with descending ``sigma``."""
    M = as_finite_matrix(M)
    U, sigma, Vh = scipy.linalg.svd(M, full_matrices=False)
    return SvdTriple(U=U, sigma=sigma, Z=Vh.T)


def pinv(M, rel_tol: Optional[float] = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse; singular values below ``rel_tol * sigma_max`` count as zero."""
    M = as_finite_matrix(M)
    rel_tol = config.get_tolerance("pinv_rel_tol") if rel_tol is None else rel_tol
    if M.size == 0:
        return np.zeros((M.shape[1], M.shape[0]))

    U, sigma, Z = svd(M)
    if sigma.size == 0 or sigma[0] == 0.0:
        return np.zeros((M.shape[1], M.shape[0]))

    keep = sigma > rel_tol * sigma[0]
    return (Z[:, keep] / sigma[keep]) @ U[:, keep].T


def khatri_rao(A, B) -> np.ndarray:
    """Column-wise Kronecker product: column j is ``kron(A[:, j], B[:, j])``."""
    A = as_finite_matrix(A, "A")
    B = as_finite_matrix(B, "B")
    if A.shape[1] != B.shape[1]:
        raise ColumnMismatch(
            f"Khatri-Rao needs equal column counts, got {A.shape[1]} and {B.shape[1]}"
        )
    return scipy.linalg.khatri_rao(A, B)


def vec(M) -> np.ndarray:
    return np.asarray(M, dtype=float).reshape(-1, order="F")


def unvec(v, rows: int, cols: int) -> np.ndarray:
    v = np.asarray(v, dtype=float).ravel()
    if v.size != rows * cols:
        raise LengthMismatch(f"Cannot reshape length {v.size} into {rows}x{cols}")
    return v.reshape(rows, cols, order="F")
