"""
Random graph-signal generation, covariance propagation and the stationarity proxy.

Generators take an explicit seed (or ``numpy.random.Generator``) and never
touch global random state.
"""

import logging
from dataclasses import dataclass
from typing import Literal, Optional, Tuple, Union

import numpy as np
import scipy.linalg

from src.core.config_manager import config
from src.core.errors import (
    ConfigValidationError,
    DimensionMismatch,
    IndefiniteInput,
    ZeroCovariance,
)
from src.core.filters import NodeVariantTaps, cgf_matrix, nvgf_matrix
from src.core.graph import ShiftOperator
from src.core.spectral import as_finite_matrix, sym_evd

logger = logging.getLogger(__name__)

FactorChoice = Literal["sym_sqrt", "svd_uy_ly_uyt", "svd_uy_ly"]
SeedLike = Union[int, np.random.SeedSequence, np.random.Generator, None]


@dataclass(frozen=True, eq=False)
class SignalEnsemble:
    """``N x T`` matrix whose columns are graph-signal realizations."""

    data: np.ndarray
    centered: bool = False

    def __post_init__(self):
        data = np.asarray_chkfinite(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2:
            raise DimensionMismatch(f"Signal ensemble must be N x T, got {data.shape}")
        if self.centered and data.size:
            means = np.abs(data.mean(axis=1))
            norms = np.linalg.norm(data, axis=1)
            if np.any(means > config.get_tolerance("centering") * np.maximum(norms, 1e-300)):
                raise ConfigValidationError("Ensemble flagged as centered has nonzero row means")
        object.__setattr__(self, "data", data)

    @property
    def N(self) -> int:
        return self.data.shape[0]

    @property
    def T(self) -> int:
        return self.data.shape[1]

    def center(self) -> "SignalEnsemble":
        if self.centered:
            return self
        return SignalEnsemble(self.data - self.data.mean(axis=1, keepdims=True), centered=True)


def as_ensemble(Y) -> SignalEnsemble:
    return Y if isinstance(Y, SignalEnsemble) else SignalEnsemble(np.asarray(Y, dtype=float))


def make_rng(seed: SeedLike) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


# =====================================================================
# GENERATORS
# =====================================================================
def white_ensemble(N: int, T: int, seed: SeedLike = None) -> SignalEnsemble:
    if N < 1 or T < 1:
        raise ConfigValidationError(f"White ensemble needs N, T >= 1, got N={N}, T={T}")
    return SignalEnsemble(make_rng(seed).standard_normal((N, T)))


def generate_nonstationary(R, X) -> SignalEnsemble:
    """``Y = R X``; the columns of ``Y`` have covariance ``R R^T`` when ``X`` is white."""
    R = as_finite_matrix(R, "R")
    X = as_ensemble(X)
    if R.shape != (X.N, X.N):
        raise DimensionMismatch(f"R must be {X.N} x {X.N}, got {R.shape}")
    return SignalEnsemble(R @ X.data)


def generate_stationary(p, S: ShiftOperator, X) -> SignalEnsemble:
    """Classical filter on ``X``; stationary on ``S`` when ``X`` is white."""
    X = as_ensemble(X)
    if X.N != S.N:
        raise DimensionMismatch(f"Signals have {X.N} rows, graph has {S.N} nodes")
    return SignalEnsemble(cgf_matrix(p, S) @ X.data)


# =====================================================================
# SECOND-ORDER STATISTICS
# =====================================================================
def sample_covariance(Y, center: Optional[bool] = None) -> np.ndarray:
    """
    ``(1/T) Y Y^T`` of the centered ensemble.

    Rows are centered unless the ensemble is flagged centered; ``center=False``
    forces the raw second moment (zero-mean model known a priori).
    """
    Y = as_ensemble(Y)
    if center is None:
        center = not Y.centered
    data = Y.center().data if center else Y.data
    C = data @ data.T / Y.T
    return 0.5 * (C + C.T)


def covariance_propagate(
    taps: NodeVariantTaps, S: ShiftOperator, C_x
) -> Tuple[np.ndarray, np.ndarray]:
    """Output covariance ``H C_x H^T`` and its spectral version ``V^-1 C_y V``."""
    C_x = as_finite_matrix(C_x, "C_x")
    if C_x.shape != (S.N, S.N):
        raise DimensionMismatch(f"C_x must be {S.N} x {S.N}, got {C_x.shape}")
    H = nvgf_matrix(taps, S)
    C_y = H @ C_x @ H.T
    C_y_hat = S.V.T @ C_y @ S.V
    return C_y, C_y_hat


def spectral_covariance(C_y, S: ShiftOperator) -> np.ndarray:
    return S.V.T @ as_finite_matrix(C_y, "C_y") @ S.V


def stationarity_from_covariance(C_y, S: ShiftOperator) -> float:
    C_hat = spectral_covariance(C_y, S)
    total = np.linalg.norm(C_hat) ** 2
    if total == 0.0:
        raise ZeroCovariance("Covariance is identically zero; stationarity proxy undefined")
    return float(np.sum(np.diag(C_hat) ** 2) / total)


def stationarity_proxy(Y, S: ShiftOperator) -> float:
    """Diagonal dominance of the spectral covariance; 1 for stationary data."""
    Y = as_ensemble(Y)
    if Y.N != S.N:
        raise DimensionMismatch(f"Signals have {Y.N} rows, graph has {S.N} nodes")
    rho = stationarity_from_covariance(sample_covariance(Y), S)
    logger.info(f"📊 [Signals] Stationarity proxy rho = {rho:.4f} (N={Y.N}, T={Y.T})")
    return rho


def commutator_norm(A, B) -> float:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    return float(np.linalg.norm(A @ B - B @ A))


def covariance_factor(C_y, choice: FactorChoice = "sym_sqrt") -> np.ndarray:
    """Square factor ``R`` with ``R R^T = C_y``."""
    C_y = as_finite_matrix(C_y, "C_y")
    if C_y.shape[0] != C_y.shape[1]:
        raise DimensionMismatch(f"Covariance must be square, got {C_y.shape}")
    if choice not in ("sym_sqrt", "svd_uy_ly_uyt", "svd_uy_ly"):
        raise ConfigValidationError(f"Unknown covariance factor '{choice}'")

    eig = sym_evd(C_y)
    lam = eig.lam
    lam_max = max(float(lam.max(initial=0.0)), 0.0)
    if lam.size and lam.min() < -config.get_tolerance("psd_error") * lam_max:
        raise IndefiniteInput(f"Covariance has eigenvalue {lam.min():.3e} (max {lam_max:.3e})")
    if lam.size and lam.min() < -config.get_tolerance("psd_clip") * lam_max:
        logger.warning(f"⚠️ [Signals] Clipping negative covariance eigenvalue {lam.min():.3e}")
    root = np.sqrt(np.clip(lam, 0.0, None))

    if choice == "sym_sqrt":
        R = (eig.V * root) @ eig.V.T
        return 0.5 * (R + R.T)
    if choice == "svd_uy_ly":
        order = np.argsort(root)[::-1]
        return eig.V[:, order] * root[order]

    U, sigma, _ = scipy.linalg.svd(0.5 * (C_y + C_y.T))
    return (U * np.sqrt(sigma)) @ U.T
