"""
Primal and dual graph shift operators, the graph Fourier transform and
Vandermonde frequency matrices.

Only real symmetric shift operators are supported, so the inverse GFT basis is
the transpose of the eigenvector matrix. The dual graph keeps the pairing
between entry ``i`` of ``lambda_f`` and eigenvector column ``i`` of the primal.
"""

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from src.core.config_manager import config
from src.core.errors import (
    AsymmetricInput,
    ConfigValidationError,
    DimensionMismatch,
    NegativeWeight,
)
from src.core.spectral import EigPair, as_finite_matrix, sym_evd

logger = logging.getLogger(__name__)

ShiftKind = Literal["adjacency", "laplacian", "normalized_laplacian", "custom"]


@dataclass(frozen=True, eq=False)
class ShiftOperator:
    matrix: np.ndarray
    eig: EigPair = field(repr=False)
    kind: ShiftKind = "custom"

    @classmethod
    def from_matrix(cls, S, kind: ShiftKind = "custom") -> "ShiftOperator":
        S = as_finite_matrix(S, "shift operator")
        S = 0.5 * (S + S.T) if S.size else S
        eig = sym_evd(S)
        S.setflags(write=False)
        return cls(matrix=S, eig=eig, kind=kind)

    @property
    def N(self) -> int:
        return self.matrix.shape[0]

    @property
    def V(self) -> np.ndarray:
        return self.eig.V

    @property
    def lam(self) -> np.ndarray:
        return self.eig.lam


@dataclass(frozen=True, eq=False)
class DualGraph:
    """Frequency-domain graph ``S_f = V^{-1} Diag(lambda_f) V`` attached to a primal shift."""

    lambda_f: np.ndarray
    matrix: np.ndarray
    source: ShiftOperator = field(repr=False)

    @property
    def N(self) -> int:
        return self.lambda_f.size

    @property
    def V_f(self) -> np.ndarray:
        # Eigenvectors of the dual graph are the rows of V.
        return self.source.V.T

    def gft(self, x_hat) -> np.ndarray:
        """Dual GFT ``V_f^{-1} x_hat``; maps a spectrum back onto the primal vertices."""
        return self.source.V @ _check_rows(x_hat, self.N)

    def igft(self, y) -> np.ndarray:
        return self.source.V.T @ _check_rows(y, self.N)


@dataclass(frozen=True, eq=False)
class Vandermonde:
    nodes: np.ndarray
    degree_count: int
    matrix: np.ndarray


# =====================================================================
# SHIFT OPERATOR CONSTRUCTION
# =====================================================================
def _validate_weights(W) -> np.ndarray:
    W = as_finite_matrix(W, "weight matrix")
    if W.shape[0] != W.shape[1]:
        raise DimensionMismatch(f"Weight matrix must be square, got {W.shape}")
    if W.size == 0:
        return W
    scale = max(np.linalg.norm(W), 1.0)
    if np.linalg.norm(W - W.T) > config.get_tolerance("evd_symmetry") * scale:
        raise AsymmetricInput("Weight matrix is not symmetric")
    if (W < 0).any():
        raise NegativeWeight(f"Weight matrix has {(W < 0).sum()} negative entries")
    if np.any(np.diag(W) != 0):
        raise ConfigValidationError("Weight matrix must have a zero diagonal (no self-loops)")
    return 0.5 * (W + W.T)


def shift_from_adjacency(W) -> ShiftOperator:
    return ShiftOperator.from_matrix(_validate_weights(W), kind="adjacency")


def shift_laplacian(W) -> ShiftOperator:
    W = _validate_weights(W)
    return ShiftOperator.from_matrix(np.diag(W.sum(axis=1)) - W, kind="laplacian")


def shift_normalized_laplacian(W) -> ShiftOperator:
    """``I - D^{-1/2} W D^{-1/2}``; isolated nodes keep an all-zero row and column."""
    W = _validate_weights(W)
    degrees = W.sum(axis=1)
    connected = degrees > 0
    inv_sqrt = np.zeros_like(degrees)
    inv_sqrt[connected] = 1.0 / np.sqrt(degrees[connected])
    L = np.diag(connected.astype(float)) - inv_sqrt[:, None] * W * inv_sqrt[None, :]
    return ShiftOperator.from_matrix(L, kind="normalized_laplacian")


def path_adjacency(N: int) -> np.ndarray:
    W = np.zeros((N, N))
    idx = np.arange(N - 1)
    W[idx, idx + 1] = 1.0
    W[idx + 1, idx] = 1.0
    return W


def grid_adjacency(rows: int, cols: int) -> np.ndarray:
    """4-neighbour lattice; node ``r * cols + c`` is pixel ``(r, c)``."""
    return np.kron(np.eye(rows), path_adjacency(cols)) + np.kron(
        path_adjacency(rows), np.eye(cols)
    )


# =====================================================================
# FOURIER TRANSFORMS AND DUAL GRAPH
# =====================================================================
def _check_rows(x, N: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[0] != N:
        raise DimensionMismatch(f"Signal has {x.shape[0]} rows, graph has {N} nodes")
    return x


def gft(S: ShiftOperator, x) -> np.ndarray:
    return S.V.T @ _check_rows(x, S.N)


def igft(S: ShiftOperator, x_hat) -> np.ndarray:
    return S.V @ _check_rows(x_hat, S.N)


def dual_from_frequencies(S: ShiftOperator, lambda_f) -> DualGraph:
    lambda_f = np.asarray_chkfinite(lambda_f, dtype=float).ravel()
    if lambda_f.size != S.N:
        raise DimensionMismatch(
            f"lambda_f has length {lambda_f.size}, primal graph has {S.N} nodes"
        )
    S_f = (S.V.T * lambda_f) @ S.V
    S_f = 0.5 * (S_f + S_f.T)
    logger.debug(f"[DualGraph] Built dual shift for N={S.N}")
    return DualGraph(lambda_f=lambda_f, matrix=S_f, source=S)


def vandermonde(x, K: int) -> Vandermonde:
    """``M x K`` matrix with column ``k`` equal to ``x**k`` (k = 0..K-1)."""
    if K < 1:
        raise ConfigValidationError(f"Vandermonde needs K >= 1, got {K}")
    x = np.asarray(x, dtype=float).ravel()
    return Vandermonde(nodes=x, degree_count=K, matrix=np.vander(x, K, increasing=True))
