"""
Estimation of node-variant filter taps from graph signals.

Input-output data is fitted by least squares on the Khatri-Rao design. With
outputs only, the sample covariance factor ``R`` is matched by ``H_I(P,S) U``
over taps ``P`` and orthogonal ``U`` through alternating minimization.
"""

import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
import scipy.linalg

from src.core.config_manager import config, merged_section
from src.core.errors import ConfigValidationError, DimensionMismatch, RankDeficientDesign, UnderdeterminedDesign
from src.core.filters import NodeVariantTaps, nvgf_apply, nvgf_matrix
from src.core.graph import ShiftOperator
from src.core.signals import as_ensemble, covariance_factor, make_rng, sample_covariance
from src.core.spectral import khatri_rao, svd

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TapEstimate:
    taps: NodeVariantTaps
    residual_nse: float
    iterations: int = 0
    objective_trace: Tuple[float, ...] = ()
    U: Optional[np.ndarray] = field(default=None, repr=False)

    def to_json(self) -> Dict[str, Any]:
        payload = {
            "taps": self.taps.P.tolist(),
            "flavor": self.taps.flavor,
            "residual_nse": float(self.residual_nse),
            "iterations": int(self.iterations),
            "objective_trace": [float(v) for v in self.objective_trace],
        }
        if self.U is not None:
            payload["U"] = self.U.tolist()
        return payload

    @classmethod
    def from_json(cls, payload: Dict[str, Any]) -> "TapEstimate":
        U = payload.get("U")
        return cls(
            taps=NodeVariantTaps(np.asarray(payload["taps"], dtype=float), payload.get("flavor", "I")),
            residual_nse=float(payload["residual_nse"]),
            iterations=int(payload.get("iterations", 0)),
            objective_trace=tuple(payload.get("objective_trace", ())),
            U=None if U is None else np.asarray(U, dtype=float),
        )


@dataclass(frozen=True)
class AltMinConfig:
    max_iters: int = 200
    rel_obj_tol: float = 1e-8
    factor_choice: str = "sym_sqrt"
    init: str = "identity"
    seed: Optional[int] = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigValidationError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.rel_obj_tol <= 0:
            raise ConfigValidationError(f"rel_obj_tol must be > 0, got {self.rel_obj_tol}")
        if self.init not in ("identity", "random"):
            raise ConfigValidationError(f"init must be 'identity' or 'random', got '{self.init}'")
        if self.factor_choice not in ("sym_sqrt", "svd_uy_ly_uyt", "svd_uy_ly"):
            raise ConfigValidationError(f"Unknown factor_choice '{self.factor_choice}'")

    @classmethod
    def from_dict(cls, overrides: Optional[Dict[str, Any]] = None) -> "AltMinConfig":
        allowed = set(cls.__dataclass_fields__)
        return cls(**merged_section("altmin", overrides, allowed))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# =====================================================================
# METRICS AND DESIGN
# =====================================================================
def nse(estimate, reference) -> float:
    """Normalized squared error ``||estimate - reference||_F^2 / ||reference||_F^2``."""
    estimate = np.asarray(estimate, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if estimate.shape != reference.shape:
        raise DimensionMismatch(f"NSE shapes differ: {estimate.shape} vs {reference.shape}")
    denom = np.linalg.norm(reference) ** 2
    num = np.linalg.norm(estimate - reference) ** 2
    if denom == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return float(num / denom)


def _shifted_inputs(X: np.ndarray, S: ShiftOperator, L: int) -> np.ndarray:
    """Stack ``S^l X`` for l = 0..L-1 into an ``L x N x T`` array."""
    Z = np.empty((L,) + X.shape)
    Z[0] = X
    for l in range(1, L):
        Z[l] = S.matrix @ Z[l - 1]
    return Z


def _check_problem(X: np.ndarray, S: ShiftOperator, L: int):
    if L < 1:
        raise ConfigValidationError(f"Filter order L must be >= 1, got {L}")
    if X.shape[0] != S.N:
        raise DimensionMismatch(f"Signals have {X.shape[0]} rows, graph has {S.N} nodes")


def design_matrix(X, S: ShiftOperator, L: int) -> np.ndarray:
    """``A = [X^T * I_N, (S X)^T * I_N, ...]`` so that ``A vec(P) = vec(H_I(P,S) X)``."""
    X = as_ensemble(X).data
    _check_problem(X, S, L)
    eye = np.eye(S.N)
    Z = _shifted_inputs(X, S, L)
    return np.hstack([khatri_rao(Z[l].T, eye) for l in range(L)])


def _solve_taps(X: np.ndarray, Y: np.ndarray, S: ShiftOperator, L: int) -> Tuple[np.ndarray, int]:
    """
    Least-squares taps for ``Y ~ H_I(P,S) X``.

    The Khatri-Rao design is block diagonal up to a permutation (one block per
    node), so the pseudoinverse solve splits into ``N`` small ``T x L`` problems.
    Returns the taps and the number of rank-deficient node blocks.
    """
    rank_tol = config.get_tolerance("design_rank")
    Z = _shifted_inputs(X, S, L)
    P = np.zeros((S.N, L))
    deficient = 0
    for n in range(S.N):
        block = Z[:, n, :].T
        if not np.any(block):
            deficient += 1
            continue
        p_n, _, rank, _ = scipy.linalg.lstsq(block, Y[n], cond=rank_tol)
        P[n] = p_n
        if rank < L:
            deficient += 1
    return P, deficient


def estimate_taps_io(X, Y, S: ShiftOperator, L: int) -> TapEstimate:
    X = as_ensemble(X).data
    Y = as_ensemble(Y).data
    _check_problem(X, S, L)
    if Y.shape != X.shape:
        raise DimensionMismatch(f"Inputs {X.shape} and outputs {Y.shape} must have equal shapes")
    if X.shape[1] < L:
        msg = f"T={X.shape[1]} < L={L}: tap estimation is underdetermined"
        logger.warning(f"⚠️ [TapEstimation] {msg}")
        warnings.warn(msg, UnderdeterminedDesign)

    logger.info(f"⏳ [TapEstimation] Input-output least squares (N={S.N}, T={X.shape[1]}, L={L})...")
    P, deficient = _solve_taps(X, Y, S, L)
    if deficient:
        msg = f"{deficient} of {S.N} node blocks are rank deficient; truncated solve used"
        logger.warning(f"⚠️ [TapEstimation] {msg}")
        warnings.warn(msg, RankDeficientDesign)

    taps = NodeVariantTaps(P, flavor="I")
    residual = nse(nvgf_apply(taps, S, X), Y)
    logger.info(f"✅ [TapEstimation] Residual NSE = {residual:.3e}")
    return TapEstimate(taps=taps, residual_nse=residual)


# =====================================================================
# OUTPUT-ONLY ESTIMATION
# =====================================================================
def procrustes(M) -> np.ndarray:
    """Orthogonal ``U`` maximizing ``trace(M U)``: ``V_p U_p^T`` from ``M = U_p S V_p^T``."""
    M = np.asarray_chkfinite(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"Procrustes needs a square matrix, got {M.shape}")
    U_p, _, Z_p = svd(M)
    return Z_p @ U_p.T


def random_orthogonal(N: int, seed=None) -> np.ndarray:
    Q, R = scipy.linalg.qr(make_rng(seed).standard_normal((N, N)))
    return Q * np.sign(np.where(np.diag(R) == 0, 1.0, np.diag(R)))


def alternating_minimization(R, S: ShiftOperator, L: int, cfg: AltMinConfig) -> TapEstimate:
    """Minimize ``||R - H_I(P,S) U||_F^2`` over taps ``P`` and orthogonal ``U``."""
    R = np.asarray_chkfinite(R, dtype=float)
    if R.shape != (S.N, S.N):
        raise DimensionMismatch(f"R must be {S.N} x {S.N}, got {R.shape}")
    _check_problem(R, S, L)

    U = np.eye(S.N) if cfg.init == "identity" else random_orthogonal(S.N, cfg.seed)
    scale = max(np.linalg.norm(R) ** 2, np.finfo(float).tiny)
    trace = []
    deficient_seen = False
    P = np.zeros((S.N, L))
    n_iter = 0

    for n_iter in range(1, cfg.max_iters + 1):
        P, deficient = _solve_taps(U, R, S, L)
        deficient_seen = deficient_seen or bool(deficient)
        H = nvgf_matrix(NodeVariantTaps(P), S)
        U = procrustes(R.T @ H)
        objective = float(np.linalg.norm(R - H @ U) ** 2)
        trace.append(objective)
        logger.debug(f"[AltMin] iter {n_iter}: objective = {objective:.6e}")

        if objective <= np.finfo(float).eps * scale:
            break
        if n_iter > 1 and (trace[-2] - objective) <= cfg.rel_obj_tol * max(trace[-2], np.finfo(float).tiny):
            break

    if deficient_seen:
        warnings.warn("Rank-deficient tap solve inside alternating minimization", RankDeficientDesign)

    if L == 1:
        # C_y only pins down |p_0|; move the signs into U.
        signs = np.where(P[:, 0] < 0, -1.0, 1.0)
        P = P * signs[:, None]
        U = signs[:, None] * U

    taps = NodeVariantTaps(P, flavor="I")
    residual = nse(nvgf_matrix(taps, S) @ U, R)
    logger.info(f"✅ [AltMin] Converged after {n_iter} iterations, NSE(R, HU) = {residual:.3e}")
    return TapEstimate(
        taps=taps, residual_nse=residual, iterations=n_iter, objective_trace=tuple(trace), U=U
    )


def estimate_taps_output_only(Y, S: ShiftOperator, L: int, cfg: Optional[AltMinConfig] = None) -> TapEstimate:
    cfg = AltMinConfig.from_dict() if cfg is None else cfg
    Y = as_ensemble(Y).center()
    if Y.N != S.N:
        raise DimensionMismatch(f"Signals have {Y.N} rows, graph has {S.N} nodes")
    logger.info(f"⏳ [TapEstimation] Output-only alternating minimization (N={S.N}, T={Y.T}, L={L})...")
    R = covariance_factor(sample_covariance(Y), cfg.factor_choice)
    return alternating_minimization(R, S, L, cfg)


def shift_input(Y, lag: int) -> Tuple[np.ndarray, np.ndarray]:
    """Forecasting pair: input ``Y[:, :T-lag]`` against target ``Y[:, lag:]``."""
    Y = as_ensemble(Y).data
    if lag < 0 or lag >= Y.shape[1]:
        raise ConfigValidationError(f"lag must lie in [0, T), got {lag} for T={Y.shape[1]}")
    if lag == 0:
        return Y, Y
    return Y[:, :-lag], Y[:, lag:]
