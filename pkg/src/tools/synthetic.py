"""
Synthetic experiment data: random sensor graphs, jittered dual frequencies,
expansion coefficients and filtered white input/output ensembles.

A single ``SeedSequence(seed)`` spawns independent children for every random
artefact, so a dataset is fully reproducible from its config.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import pdist, squareform

from src.core.config_manager import merged_section
from src.core.errors import ConfigValidationError, DimensionMismatch
from src.core.filters import NodeVariantTaps, nvgf_apply
from src.core.graph import (
    ShiftOperator,
    grid_adjacency,
    path_adjacency,
    shift_from_adjacency,
    shift_normalized_laplacian,
    vandermonde,
)
from src.core.ingest_real_data import load_graph
from src.core.signals import SignalEnsemble, make_rng, white_ensemble
from src.tools.dual_frequency import jittered_grid

logger = logging.getLogger(__name__)

GRAPH_KINDS = ("random_sensor", "grid", "path", "from_file")
_STREAMS = ("graph", "frequencies", "coefficients", "inputs", "noise", "starts")


@dataclass(frozen=True)
class SynthConfig:
    N: int = 40
    graph_kind: str = "random_sensor"
    graph_path: Optional[str] = None
    u_min: float = -1.0
    u_max: float = 1.0
    delta: float = 10.0
    L: int = 3
    K: int = 3
    T: int = 3000
    sigma: float = 0.0
    curvature_mask: bool = True
    seed: Optional[int] = 0

    def __post_init__(self):
        if self.graph_kind not in GRAPH_KINDS:
            raise ConfigValidationError(f"graph_kind must be one of {GRAPH_KINDS}, got '{self.graph_kind}'")
        if self.graph_kind == "from_file" and not self.graph_path:
            raise ConfigValidationError("graph_kind 'from_file' requires graph_path")
        if not 1 <= self.K <= self.L <= self.N:
            raise ConfigValidationError(f"Orders must satisfy 1 <= K <= L <= N, got K={self.K}, L={self.L}, N={self.N}")
        if self.delta < 0 or self.sigma < 0:
            raise ConfigValidationError("delta and sigma must be non-negative")
        if not self.u_min < self.u_max:
            raise ConfigValidationError(f"u_min must be < u_max, got [{self.u_min}, {self.u_max}]")
        if self.T < 1:
            raise ConfigValidationError(f"T must be >= 1, got {self.T}")

    @classmethod
    def from_dict(cls, overrides: Optional[Dict[str, Any]] = None) -> "SynthConfig":
        return cls(**merged_section("synth", overrides, set(cls.__dataclass_fields__)))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @property
    def spacing(self) -> float:
        return (self.u_max - self.u_min) / (self.N - 1) if self.N > 1 else 0.0


@dataclass(frozen=True, eq=False)
class GraphDataset:
    """Shift operator plus signals; ground-truth fields stay ``None`` for real data."""

    S: ShiftOperator
    Y: SignalEnsemble
    X: Optional[SignalEnsemble] = None
    lambda_f: Optional[np.ndarray] = None
    C: Optional[np.ndarray] = None
    P: Optional[np.ndarray] = None
    config: Optional[SynthConfig] = None
    start_seed: Any = field(default=None, repr=False)

    def __post_init__(self):
        if self.Y.N != self.S.N:
            raise DimensionMismatch(f"Signals have {self.Y.N} rows, graph has {self.S.N} nodes")
        if self.X is not None and self.X.data.shape != self.Y.data.shape:
            raise DimensionMismatch(f"Inputs {self.X.data.shape} and outputs {self.Y.data.shape} differ")

    @property
    def has_ground_truth(self) -> bool:
        return self.P is not None and self.lambda_f is not None


# =====================================================================
# GENERATORS
# =====================================================================
def gen_dual_frequencies(cfg: SynthConfig, seed=None) -> np.ndarray:
    """Uniform grid on ``[u_min, u_max]`` plus truncated-normal jitter of std ``delta * P / 2``.

    ``scipy.stats.truncnorm`` draws from the same law as resampling until a draw lands in bounds.
    """
    rng = make_rng(cfg.seed if seed is None else seed)
    return jittered_grid(cfg.N, cfg.u_min, cfg.u_max, cfg.delta, rng)


def gen_coefficients(cfg: SynthConfig, seed=None) -> np.ndarray:
    rng = make_rng(cfg.seed if seed is None else seed)
    C = rng.standard_normal((cfg.K, cfg.L))
    if cfg.curvature_mask:
        C = np.arange(1, cfg.K + 1)[:, None] * C
    return C


def _connected(mask: np.ndarray) -> bool:
    n_components, _ = connected_components(mask, directed=False)
    return n_components == 1


def random_sensor_graph(N: int, seed=None) -> ShiftOperator:
    """
    Gaussian-kernel geometric graph on ``N`` uniform points in the unit square.

    Kernel width is half the mean pairwise distance. Edges below the largest
    weight level that still leaves the graph connected are removed.
    """
    if N < 2:
        raise ConfigValidationError(f"A sensor graph needs N >= 2, got {N}")
    points = make_rng(seed).uniform(size=(N, 2))
    distances = pdist(points)
    width = distances.mean() / 2.0
    W = squareform(np.exp(-(distances**2) / (2.0 * width**2)))

    levels = np.sort(np.unique(W[np.triu_indices(N, k=1)]))[::-1]
    lo, hi = 0, len(levels) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _connected(W >= levels[mid]):
            hi = mid
        else:
            lo = mid + 1
    W = np.where(W >= levels[lo], W, 0.0)
    np.fill_diagonal(W, 0.0)
    logger.info(f"🛰️ [Synthetic] Sensor graph N={N}: {np.count_nonzero(W) // 2} edges, threshold {levels[lo]:.4f}")
    return shift_from_adjacency(W)


def _grid_shape(N: int):
    rows = int(np.floor(np.sqrt(N)))
    while N % rows:
        rows -= 1
    return rows, N // rows


def build_graph(cfg: SynthConfig, seed=None) -> ShiftOperator:
    if cfg.graph_kind == "random_sensor":
        return random_sensor_graph(cfg.N, seed)
    if cfg.graph_kind == "grid":
        return shift_normalized_laplacian(grid_adjacency(*_grid_shape(cfg.N)))
    if cfg.graph_kind == "path":
        return shift_from_adjacency(path_adjacency(cfg.N))

    S = load_graph(cfg.graph_path)
    if S.N != cfg.N:
        raise DimensionMismatch(f"Graph file has {S.N} nodes, config asks for N={cfg.N}")
    return S


def synth_dataset(cfg: SynthConfig) -> GraphDataset:
    """``Y = H_I(Psi_f(lambda_f) C, S) X + noise`` with white ``X`` and noise std ``sigma``."""
    children = dict(zip(_STREAMS, np.random.SeedSequence(cfg.seed).spawn(len(_STREAMS))))
    logger.info(
        f"⏳ [Synthetic] Generating dataset (N={cfg.N}, L={cfg.L}, K={cfg.K}, T={cfg.T}, "
        f"delta={cfg.delta}, sigma={cfg.sigma}, seed={cfg.seed})..."
    )

    S = build_graph(cfg, children["graph"])
    lambda_f = gen_dual_frequencies(cfg, children["frequencies"])
    C = gen_coefficients(cfg, children["coefficients"])
    P = vandermonde(lambda_f, cfg.K).matrix @ C

    X = white_ensemble(cfg.N, cfg.T, children["inputs"])
    Y = nvgf_apply(NodeVariantTaps(P), S, X)
    if cfg.sigma > 0:
        Y = Y + cfg.sigma * make_rng(children["noise"]).standard_normal(Y.shape)

    logger.info("✅ [Synthetic] Dataset ready.")
    return GraphDataset(
        S=S,
        Y=SignalEnsemble(Y),
        X=X,
        lambda_f=lambda_f,
        C=C,
        P=P,
        config=cfg,
        start_seed=children["starts"],
    )
