"""
Classical and node-variant graph filters and the primal/dual filter conversion.

A node-variant filter of type I scales after shifting, ``sum_l Diag(p_l) S^l``;
type II scales before shifting, ``sum_l S^l Diag(p_l)``. An ``ExpansionModel``
ties a type-I primal filter on ``S`` to a type-II dual filter on ``S_f``
through ``P = Psi_f C`` and ``P_hat = Psi C^T``.
"""

import logging
from dataclasses import dataclass
from typing import Literal, Optional, Union

import numpy as np
import scipy.linalg

from src.core.config_manager import config
from src.core.errors import ConfigValidationError, DimensionMismatch, NumericalError, RowMismatch
from src.core.graph import DualGraph, ShiftOperator, dual_from_frequencies, vandermonde

logger = logging.getLogger(__name__)

Flavor = Literal["I", "II"]
ShiftLike = Union[ShiftOperator, DualGraph, np.ndarray]


@dataclass(frozen=True, eq=False)
class NodeVariantTaps:
    """``N x L`` tap matrix; column ``l`` weights the ``l``-th shift."""

    P: np.ndarray
    flavor: Flavor = "I"

    def __post_init__(self):
        P = np.asarray_chkfinite(self.P, dtype=float)
        if P.ndim == 1:
            P = P[:, None]
        if P.ndim != 2 or P.shape[1] < 1:
            raise ConfigValidationError(f"Taps must be an N x L matrix with L >= 1, got {P.shape}")
        if self.flavor not in ("I", "II"):
            raise ConfigValidationError(f"Unknown filter flavor '{self.flavor}'")
        object.__setattr__(self, "P", P)

    @property
    def N(self) -> int:
        return self.P.shape[0]

    @property
    def L(self) -> int:
        return self.P.shape[1]


@dataclass(frozen=True, eq=False)
class ExpansionModel:
    """Coefficients ``C`` (K x L) expanding the primal taps on powers of ``lambda_f``."""

    C: np.ndarray
    lambda_f: np.ndarray
    lam: np.ndarray

    @classmethod
    def from_shift(cls, C, lambda_f, S: ShiftOperator) -> "ExpansionModel":
        C = np.atleast_2d(np.asarray_chkfinite(C, dtype=float))
        lambda_f = np.asarray_chkfinite(lambda_f, dtype=float).ravel()
        if lambda_f.size != S.N:
            raise DimensionMismatch(f"lambda_f has length {lambda_f.size}, graph has {S.N} nodes")
        return cls(C=C, lambda_f=lambda_f, lam=S.lam.copy())

    @property
    def K(self) -> int:
        return self.C.shape[0]

    @property
    def L(self) -> int:
        return self.C.shape[1]

    @property
    def psi_f(self) -> np.ndarray:
        return vandermonde(self.lambda_f, self.K).matrix

    @property
    def psi(self) -> np.ndarray:
        return vandermonde(self.lam, self.L).matrix


def _shift_matrix(S: ShiftLike) -> np.ndarray:
    return S.matrix if isinstance(S, (ShiftOperator, DualGraph)) else np.asarray(S, dtype=float)


def _signal_matrix(X) -> np.ndarray:
    return np.asarray(getattr(X, "data", X), dtype=float)


# =====================================================================
# FILTER MATRICES AND APPLICATION
# =====================================================================
def cgf_matrix(p, S: ShiftLike) -> np.ndarray:
    """Classical filter ``sum_l p_l S^l`` evaluated by Horner's rule."""
    p = np.atleast_1d(np.asarray_chkfinite(p, dtype=float))
    if p.size < 1:
        raise ConfigValidationError("Classical filter needs at least one tap")
    S = _shift_matrix(S)
    eye = np.eye(S.shape[0])
    H = p[-1] * eye
    for p_l in p[-2::-1]:
        H = H @ S + p_l * eye
    return H


def nvgf_matrix(taps: NodeVariantTaps, S: ShiftLike) -> np.ndarray:
    S = _shift_matrix(S)
    if taps.N != S.shape[0]:
        raise RowMismatch(f"Taps have {taps.N} rows, shift is {S.shape[0]} x {S.shape[0]}")

    H = np.zeros_like(S)
    S_l = np.eye(S.shape[0])
    for l in range(taps.L):
        p_l = taps.P[:, l]
        if taps.flavor == "I":
            H += p_l[:, None] * S_l
        else:
            H += S_l * p_l[None, :]
        if l < taps.L - 1:
            S_l = S_l @ S
    return H


def nvgf_apply(taps: NodeVariantTaps, S: ShiftLike, X) -> np.ndarray:
    """Filter the columns of ``X`` without forming the filter when ``T < N``."""
    S = _shift_matrix(S)
    X = _signal_matrix(X)
    if X.shape[0] != S.shape[0] or taps.N != S.shape[0]:
        raise RowMismatch(
            f"Signals ({X.shape[0]} rows) and taps ({taps.N} rows) must match the {S.shape[0]}-node shift"
        )
    squeeze = X.ndim == 1
    X = X[:, None] if squeeze else X

    if X.shape[1] >= S.shape[0]:
        Y = nvgf_matrix(taps, S) @ X
    elif taps.flavor == "I":
        Z = X
        Y = taps.P[:, [0]] * Z
        for l in range(1, taps.L):
            Z = S @ Z
            Y = Y + taps.P[:, [l]] * Z
    else:
        # t_k = S t_{k-1} + Diag(p_{L-k}) x, starting from t_0 = 0
        Y = np.zeros_like(X)
        for l in range(taps.L - 1, -1, -1):
            Y = S @ Y + taps.P[:, [l]] * X
    return Y[:, 0] if squeeze else Y


# =====================================================================
# PRIMAL <-> DUAL CONVERSION
# =====================================================================
def primal_taps(model: ExpansionModel) -> NodeVariantTaps:
    psi_f = model.psi_f
    if psi_f.shape[1] != model.C.shape[0]:
        raise DimensionMismatch("Psi_f and C disagree on K")
    return NodeVariantTaps(psi_f @ model.C, flavor="I")


def dual_taps(model: ExpansionModel) -> NodeVariantTaps:
    psi = model.psi
    if psi.shape[1] != model.C.shape[1]:
        raise DimensionMismatch("Psi and C disagree on L")
    return NodeVariantTaps(psi @ model.C.T, flavor="II")


def expansion_from_estimate(P_tilde, lambda_f_tilde, S: ShiftOperator, K: int) -> ExpansionModel:
    """Least-squares coefficients ``C = Psi_f(lambda_f)^+ P`` for estimated taps."""
    P_tilde = np.asarray_chkfinite(P_tilde, dtype=float)
    psi_f = vandermonde(lambda_f_tilde, K).matrix
    if psi_f.shape[0] != P_tilde.shape[0]:
        raise DimensionMismatch("Estimated taps and frequencies disagree on N")
    C_tilde, *_ = scipy.linalg.lstsq(psi_f, P_tilde)
    return ExpansionModel.from_shift(C_tilde, lambda_f_tilde, S)


def corollary_error(
    model: ExpansionModel,
    S: ShiftOperator,
    primal: Optional[NodeVariantTaps] = None,
    dual: Optional[NodeVariantTaps] = None,
) -> float:
    """
    Relative squared gap ``||V^-1 H_I(P,S) - H_II(P_hat,S_f) V^-1||_F^2 / ||V^-1 H_I(P,S)||_F^2``.

    ``primal``/``dual`` override the taps derived from ``model``; estimated
    pipelines pass their own primal estimate here.
    """
    if model.lambda_f.size != S.N or model.lam.size != S.N:
        raise DimensionMismatch("Expansion model and shift operator disagree on N")
    primal = primal_taps(model) if primal is None else primal
    dual = dual_taps(model) if dual is None else dual
    S_f = dual_from_frequencies(S, model.lambda_f)

    V_inv = S.V.T
    lhs = V_inv @ nvgf_matrix(primal, S)
    rhs = nvgf_matrix(dual, S_f) @ V_inv
    denom = np.linalg.norm(lhs) ** 2
    num = np.linalg.norm(lhs - rhs) ** 2
    if denom == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return float(num / denom)


def dual_convolution_split(
    model: ExpansionModel, S: ShiftOperator, x_hat, tol: Optional[float] = None
) -> np.ndarray:
    """Dual filtering as ``sum_l H(c_l, S_f)(lam^l * x_hat)``, cross-checked against ``H_II``."""
    x_hat = np.asarray(x_hat, dtype=float)
    if x_hat.shape[0] != S.N:
        raise DimensionMismatch(f"Spectrum has {x_hat.shape[0]} rows, graph has {S.N} nodes")
    tol = config.get_tolerance("theorem") if tol is None else tol
    S_f = dual_from_frequencies(S, model.lambda_f)

    psi = model.psi
    weights = psi if x_hat.ndim == 1 else psi[:, :, None]
    y_hat = np.zeros_like(x_hat)
    for l in range(model.L):
        y_hat = y_hat + cgf_matrix(model.C[:, l], S_f) @ (weights[:, l] * x_hat)

    reference = nvgf_apply(dual_taps(model), S_f, x_hat)
    gap = np.linalg.norm(y_hat - reference)
    if gap > tol * max(np.linalg.norm(reference), 1.0):
        logger.error(f"❌ [Filters] Dual convolution split disagrees with H_II by {gap:.3e}")
        raise NumericalError(f"Dual convolution split mismatch: {gap:.3e}")
    return y_hat
