"""
Recovery of dual graph frequencies from estimated filter taps.

The column space of the tap matrix ``P`` is matched by a Vandermonde matrix
``Psi_f(lambda_f)`` by minimizing ``f = 1/2 ||Pi Psi_f(lambda_f)||_F^2`` with
sequential convex programming: a linearized step inside a shrinking trust
region followed by a search over convex combinations with the current iterate.
Results are only identifiable up to affine maps ``t0 + t1 * lambda_f``, which
is why estimates are scored with the Pascal-normalized error (PNE).

``f`` itself is not scale invariant: shrinking any iterate towards a constant
vector lowers it. Iterates are therefore kept standardized (zero mean, unit
standard deviation), the gradient is projected onto the tangent space of that
set, and each start ends with a Gauss-Newton polish on the same residual.
"""

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.special
import scipy.stats
from tqdm import tqdm

from src.core.config_manager import config, merged_section
from src.core.errors import (
    ConfigValidationError,
    DegenerateEstimate,
    DimensionMismatch,
    OrderMismatch,
    RankDeficientTaps,
    SingularPascal,
)
from src.core.graph import DualGraph, ShiftOperator, dual_from_frequencies, vandermonde
from src.core.signals import make_rng
from src.core.spectral import svd

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SubspaceProblem:
    projector: np.ndarray
    basis: np.ndarray
    degree_count: int

    @property
    def N(self) -> int:
        return self.projector.shape[0]

    @property
    def degenerate(self) -> bool:
        return self.basis.shape[1] >= self.N

    def residual(self, psi_f: np.ndarray) -> np.ndarray:
        """``Pi Psi_f`` computed as ``Psi_f - U (U^T Psi_f)``; accepts a leading batch axis."""
        U = self.basis
        return psi_f - np.einsum("nk,...km->...nm", U, np.einsum("nk,...nm->...km", U, psi_f))


@dataclass(frozen=True)
class ScpConfig:
    radius_scale: float = 0.1
    radius_decay: float = 0.99
    norm_p: Any = 2
    max_iters: int = 500
    alpha_grid: int = 64
    alpha_refine: bool = True
    obj_tol: float = 1e-14
    grad_tol: float = 1e-12
    num_starts: int = 5
    seed: Optional[int] = 0
    workers: int = 1
    polish: bool = True
    polish_max_nfev: int = 200

    def __post_init__(self):
        if self.radius_scale <= 0:
            raise ConfigValidationError(f"radius_scale must be > 0, got {self.radius_scale}")
        if not 0 < self.radius_decay <= 1:
            raise ConfigValidationError(f"radius_decay must lie in (0, 1], got {self.radius_decay}")
        if str(self.norm_p) not in ("2", "inf"):
            raise ConfigValidationError(f"norm_p must be 2 or 'inf', got {self.norm_p}")
        if self.max_iters < 1 or self.alpha_grid < 1 or self.num_starts < 1 or self.workers < 1:
            raise ConfigValidationError("max_iters, alpha_grid, num_starts and workers must be >= 1")
        if self.obj_tol < 0 or self.grad_tol < 0:
            raise ConfigValidationError("Tolerances must be non-negative")
        if self.polish_max_nfev < 1:
            raise ConfigValidationError(f"polish_max_nfev must be >= 1, got {self.polish_max_nfev}")

    @classmethod
    def from_dict(cls, overrides: Optional[Dict[str, Any]] = None) -> "ScpConfig":
        return cls(**merged_section("scp", overrides, set(cls.__dataclass_fields__)))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def radius(self, r: int, start_range: float) -> float:
        rho0 = self.radius_scale * (start_range if start_range > 0 else 1.0)
        return rho0 * self.radius_decay**r


@dataclass(frozen=True, eq=False)
class ScpResult:
    lambda_f: np.ndarray
    objective: float
    trace: Tuple[float, ...]
    start_index: int = 0
    iterations: int = 0
    stop_reason: str = "max_iters"
    config_echo: Optional[Dict[str, Any]] = None

    def to_json(self) -> Dict[str, Any]:
        return {
            "lambda_f": self.lambda_f.tolist(),
            "objective": float(self.objective),
            "trace": [float(v) for v in self.trace],
            "start_index": int(self.start_index),
            "iterations": int(self.iterations),
            "stop_reason": self.stop_reason,
            "config_echo": self.config_echo or {},
        }

    @classmethod
    def from_json(cls, payload: Dict[str, Any]) -> "ScpResult":
        return cls(
            lambda_f=np.asarray(payload["lambda_f"], dtype=float),
            objective=float(payload["objective"]),
            trace=tuple(payload.get("trace", ())),
            start_index=int(payload.get("start_index", 0)),
            iterations=int(payload.get("iterations", 0)),
            stop_reason=payload.get("stop_reason", "unknown"),
            config_echo=payload.get("config_echo"),
        )


# =====================================================================
# SUBSPACE FITTING OBJECTIVE
# =====================================================================
def subspace_problem(P, K: int) -> SubspaceProblem:
    P = np.asarray_chkfinite(P, dtype=float)
    if P.ndim != 2:
        raise DimensionMismatch(f"Taps must be N x L, got {P.shape}")
    N, L = P.shape
    if K < 1:
        raise ConfigValidationError(f"K must be >= 1, got {K}")
    if L < K:
        raise OrderMismatch(f"Subspace fitting requires L >= K, got L={L}, K={K}")
    if K > N:
        raise OrderMismatch(f"K={K} exceeds the number of nodes N={N}")

    U, sigma, _ = svd(P)
    if sigma[0] == 0 or sigma[K - 1] / sigma[0] <= config.get_tolerance("subspace_rank"):
        msg = f"Tap matrix has numerical rank below K={K}"
        logger.warning(f"⚠️ [Subspace] {msg}")
        warnings.warn(msg, RankDeficientTaps)
    U = U[:, :K]
    Pi = np.eye(N) - U @ U.T
    prob = SubspaceProblem(projector=Pi, basis=U, degree_count=K)
    if K == N:
        logger.warning("⚠️ [Subspace] K == N: projector vanishes and every lambda_f fits")
    return prob


def _check_lambda(prob: SubspaceProblem, lambda_f) -> np.ndarray:
    lambda_f = np.asarray(lambda_f, dtype=float)
    if lambda_f.shape[-1] != prob.N:
        raise DimensionMismatch(f"lambda_f has length {lambda_f.shape[-1]}, problem has N={prob.N}")
    return lambda_f


def _batched_vandermonde(lambdas: np.ndarray, K: int) -> np.ndarray:
    powers = np.ones(lambdas.shape + (K,))
    for k in range(1, K):
        powers[..., k] = powers[..., k - 1] * lambdas
    return powers


def objective(prob: SubspaceProblem, lambda_f) -> float:
    lambda_f = _check_lambda(prob, lambda_f)
    residual = prob.residual(vandermonde(lambda_f, prob.degree_count).matrix)
    return 0.5 * float(np.sum(residual**2))


def _objective_batch(prob: SubspaceProblem, lambdas: np.ndarray) -> np.ndarray:
    residual = prob.residual(_batched_vandermonde(lambdas, prob.degree_count))
    return 0.5 * np.sum(residual**2, axis=(-2, -1))


def differentiation_matrix(K: int) -> np.ndarray:
    return np.diag(np.arange(1.0, K), k=1)


def gradient(prob: SubspaceProblem, lambda_f) -> np.ndarray:
    """``diag(Pi Psi_f D_K^T Psi_f^T)``: derivative of ``f`` with respect to each ``lambda_f[n]``."""
    lambda_f = _check_lambda(prob, lambda_f)
    psi_f = vandermonde(lambda_f, prob.degree_count).matrix
    d_psi = psi_f @ differentiation_matrix(prob.degree_count)
    return np.sum(prob.residual(psi_f) * d_psi, axis=1)


# =====================================================================
# SEQUENTIAL CONVEX PROGRAMMING
# =====================================================================
def standardize(lambdas) -> np.ndarray:
    """Affine image with zero mean and unit standard deviation along the last axis."""
    lambdas = np.asarray(lambdas, dtype=float)
    centered = lambdas - lambdas.mean(axis=-1, keepdims=True)
    scale = np.sqrt(np.mean(centered**2, axis=-1, keepdims=True))
    return centered / np.maximum(scale, np.finfo(float).tiny)


def tangent_gradient(prob: SubspaceProblem, lambda_f) -> np.ndarray:
    """Gradient of ``f(standardize(lambda_f))`` at a standardized point.

    The shift and scale directions are removed, so a descent step cannot move
    towards the constant vector.
    """
    lambda_f = _check_lambda(prob, lambda_f)
    grad = gradient(prob, lambda_f)
    grad = grad - grad.mean()
    return grad - (grad @ lambda_f / lambda_f.size) * lambda_f


def _linearized_step(lambda_f: np.ndarray, grad: np.ndarray, radius: float, norm_p) -> np.ndarray:
    """Minimizer of the first-order model over the p-norm trust region."""
    if str(norm_p) == "inf":
        return lambda_f - radius * np.sign(grad)
    return lambda_f - radius * grad / np.linalg.norm(grad)


def _best_combination(
    prob: SubspaceProblem, current: np.ndarray, step: np.ndarray, cfg: ScpConfig
) -> Tuple[np.ndarray, float]:
    """Best ``alpha * current + (1 - alpha) * step`` over the alpha grid (alpha = 0 included).

    Candidates are standardized before they are scored.
    """
    alphas = np.arange(cfg.alpha_grid) / cfg.alpha_grid
    candidates = alphas[:, None] * current[None, :] + (1.0 - alphas)[:, None] * step[None, :]
    values = _objective_batch(prob, standardize(candidates))
    best = int(np.argmin(values))
    alpha_best, f_best = alphas[best], float(values[best])

    if cfg.alpha_refine:
        width = 1.0 / cfg.alpha_grid
        bounds = (max(alpha_best - width, 0.0), min(alpha_best + width, 1.0))
        refined = scipy.optimize.minimize_scalar(
            lambda a: objective(prob, standardize(a * current + (1.0 - a) * step)),
            bounds=bounds,
            method="bounded",
            options={"xatol": 1e-12},
        )
        if refined.success and refined.fun < f_best:
            alpha_best, f_best = float(refined.x), float(refined.fun)

    return standardize(alpha_best * current + (1.0 - alpha_best) * step), f_best


def _polish(prob: SubspaceProblem, lambda_f: np.ndarray, cfg: ScpConfig) -> Tuple[np.ndarray, float]:
    """Gauss-Newton refinement of ``vec(Pi Psi_f(standardize(z)))`` with an analytic Jacobian."""
    N, K = prob.N, prob.degree_count
    D = differentiation_matrix(K)

    def residual(z: np.ndarray) -> np.ndarray:
        return prob.residual(vandermonde(standardize(z), K).matrix).ravel()

    def jacobian(z: np.ndarray) -> np.ndarray:
        centered = z - z.mean()
        scale = np.sqrt(np.mean(centered**2))
        mu = centered / scale
        d_psi = vandermonde(mu, K).matrix @ D
        # d vec(Pi Psi_f) / d mu, rows ordered as residual.ravel()
        J_mu = (prob.projector[:, None, :] * d_psi.T[None, :, :]).reshape(N * K, N)
        unit = mu / np.sqrt(N)
        J_std = (np.eye(N) - 1.0 / N - np.outer(unit, unit)) / scale
        return J_mu @ J_std

    solution = scipy.optimize.least_squares(
        residual,
        lambda_f,
        jac=jacobian,
        method="trf",
        ftol=1e-15,
        xtol=1e-15,
        gtol=1e-15,
        max_nfev=cfg.polish_max_nfev,
    )
    polished = standardize(solution.x)
    return polished, objective(prob, polished)


def scp_solve(prob: SubspaceProblem, lambda_f0, cfg: Optional[ScpConfig] = None) -> ScpResult:
    cfg = ScpConfig.from_dict() if cfg is None else cfg
    lam = _check_lambda(prob, lambda_f0).astype(float).copy()
    if lam.size < 2 or np.ptp(lam) == 0:
        msg = "Constant starting point: the standardized iterate is undefined"
        logger.warning(f"⚠️ [SCP] {msg}")
        warnings.warn(msg, DegenerateEstimate)
        f_val = objective(prob, lam)
        return ScpResult(
            lambda_f=lam,
            objective=f_val,
            trace=(f_val,),
            stop_reason="degenerate_start",
            config_echo=cfg.to_dict(),
        )

    lam = standardize(lam)
    start_range = float(np.ptp(lam))
    f_val = objective(prob, lam)
    trace: List[float] = [f_val]
    stop_reason = "max_iters"
    r = 0

    for r in range(cfg.max_iters):
        if f_val <= cfg.obj_tol:
            stop_reason = "obj_tol"
            break
        grad = tangent_gradient(prob, lam)
        if np.linalg.norm(grad) <= cfg.grad_tol:
            stop_reason = "grad_tol"
            break

        step = _linearized_step(lam, grad, cfg.radius(r, start_range), cfg.norm_p)
        candidate, f_candidate = _best_combination(prob, lam, step, cfg)
        if f_candidate < f_val:
            lam, f_val = candidate, f_candidate
        trace.append(f_val)
        logger.debug(f"[SCP] iter {r}: f = {f_val:.6e}")
    else:
        r = cfg.max_iters

    if cfg.polish and f_val > cfg.obj_tol and prob.degree_count >= 2 and not prob.degenerate:
        polished, f_polished = _polish(prob, lam, cfg)
        if f_polished < f_val:
            logger.debug(f"[SCP] polish: f = {f_val:.6e} -> {f_polished:.6e}")
            lam, f_val = polished, f_polished
            trace.append(f_val)
            stop_reason = "polish"

    if stop_reason in ("max_iters", "polish") and f_val <= cfg.obj_tol:
        stop_reason = "obj_tol"
    return ScpResult(
        lambda_f=lam,
        objective=f_val,
        trace=tuple(trace),
        iterations=r,
        stop_reason=stop_reason,
        config_echo=cfg.to_dict(),
    )


def multi_start(
    prob: SubspaceProblem, starts: Sequence[np.ndarray], cfg: Optional[ScpConfig] = None
) -> ScpResult:
    """Run SCP from every start; lowest objective wins, ties go to the lowest index."""
    cfg = ScpConfig.from_dict() if cfg is None else cfg
    starts = [np.asarray(s, dtype=float) for s in starts]
    if not starts:
        raise ConfigValidationError("multi_start needs at least one starting point")

    logger.info(f"⏳ [SCP] Running {len(starts)} starts (N={prob.N}, K={prob.degree_count})...")
    progress = dict(total=len(starts), desc="SCP starts", disable=None, leave=False)
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(tqdm(pool.map(lambda s: scp_solve(prob, s, cfg), starts), **progress))
    else:
        results = [scp_solve(prob, s, cfg) for s in tqdm(starts, **progress)]

    winner = min(range(len(results)), key=lambda i: (results[i].objective, i))
    best = results[winner]
    logger.info(
        f"✅ [SCP] Start {winner} wins with f = {best.objective:.3e} after {best.iterations} iterations"
    )
    return ScpResult(
        lambda_f=best.lambda_f,
        objective=best.objective,
        trace=best.trace,
        start_index=winner,
        iterations=best.iterations,
        stop_reason=best.stop_reason,
        config_echo=best.config_echo,
    )


def truncated_jitter(size: int, scale: float, rng) -> np.ndarray:
    """Zero-mean normal draws with std ``scale``, truncated at one standard deviation."""
    if scale <= 0:
        return np.zeros(size)
    return scipy.stats.truncnorm.rvs(-1.0, 1.0, loc=0.0, scale=scale, size=size, random_state=rng)


def jittered_grid(N: int, u_min: float, u_max: float, delta: float, rng) -> np.ndarray:
    grid = np.linspace(u_min, u_max, N)
    spacing = (u_max - u_min) / (N - 1) if N > 1 else 0.0
    return grid + truncated_jitter(N, delta * spacing / 2.0, rng)


def make_starts(
    N: int, u_min: float, u_max: float, num_starts: int, delta: float, seed=None
) -> List[np.ndarray]:
    """Uniform grid first, then jittered copies of it."""
    rng = make_rng(seed)
    starts = [np.linspace(u_min, u_max, N)]
    starts += [jittered_grid(N, u_min, u_max, delta, rng) for _ in range(num_starts - 1)]
    return starts


# =====================================================================
# AMBIGUITY HANDLING AND METRICS
# =====================================================================
def pascal_matrix(t0: float, t1: float, K: int) -> np.ndarray:
    """Upper Pascal matrix with ``v(t0 + t1 x)^T = v(x)^T T`` for Vandermonde rows ``v``."""
    if t1 == 0:
        raise SingularPascal("Pascal matrix with t1 = 0 is singular")
    i, j = np.meshgrid(np.arange(K), np.arange(K), indexing="ij")
    upper = j >= i
    T = np.zeros((K, K))
    T[upper] = (
        scipy.special.comb(j[upper], i[upper])
        * float(t0) ** (j[upper] - i[upper])
        * float(t1) ** i[upper]
    )
    return T


def _affine_basis(lambda_tilde: np.ndarray) -> np.ndarray:
    """Orthonormal-ish basis of span{1, lambda_tilde}; drops the second column if constant."""
    centered = lambda_tilde - lambda_tilde.mean()
    spread = np.linalg.norm(centered)
    ones = np.ones_like(lambda_tilde)
    if spread <= 1e-12 * max(np.abs(lambda_tilde).max(initial=0.0), 1e-300) or spread == 0.0:
        msg = "Estimated frequencies are constant; only the mean is identifiable"
        logger.warning(f"⚠️ [PNE] {msg}")
        warnings.warn(msg, DegenerateEstimate)
        return ones[:, None]
    return np.column_stack([ones, centered / spread])


def _check_pair(lambda_tilde, lambda_f) -> Tuple[np.ndarray, np.ndarray]:
    lambda_tilde = np.asarray_chkfinite(lambda_tilde, dtype=float).ravel()
    lambda_f = np.asarray_chkfinite(lambda_f, dtype=float).ravel()
    if lambda_tilde.shape != lambda_f.shape:
        raise DimensionMismatch(f"Lengths differ: {lambda_tilde.size} vs {lambda_f.size}")
    if not np.any(lambda_f):
        raise ConfigValidationError("Reference frequencies must not be identically zero")
    return lambda_tilde, lambda_f


def ambiguity_correct(lambda_tilde, lambda_f) -> np.ndarray:
    """Closest affine image ``t0 + t1 * lambda_tilde`` to ``lambda_f``."""
    lambda_tilde, lambda_f = _check_pair(lambda_tilde, lambda_f)
    A = _affine_basis(lambda_tilde)
    coef, *_ = scipy.linalg.lstsq(A, lambda_f)
    return A @ coef


def pne(lambda_tilde, lambda_f) -> float:
    """Normalized squared error after removing the affine (Pascal) ambiguity."""
    corrected = ambiguity_correct(lambda_tilde, lambda_f)
    lambda_f = np.asarray(lambda_f, dtype=float).ravel()
    return float(np.linalg.norm(lambda_f - corrected) ** 2 / np.linalg.norm(lambda_f) ** 2)


def ambiguity_corrected_dual(S: ShiftOperator, lambda_tilde, lambda_f) -> DualGraph:
    return dual_from_frequencies(S, ambiguity_correct(lambda_tilde, lambda_f))
