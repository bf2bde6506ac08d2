import logging
import math
import operator
import time
import warnings
from dataclasses import asdict, dataclass, field
from itertools import product
from typing import Annotated, Any, Callable, Dict, Iterable, List, Optional, Tuple, TypedDict

import numpy as np
import pandas as pd
from langgraph.graph import END, StateGraph
from tqdm import tqdm

from src.core.config_manager import config
from src.core.errors import ConfigValidationError, ZeroCovariance
from src.core.filters import NodeVariantTaps, corollary_error, expansion_from_estimate
from src.core.graph import DualGraph, dual_from_frequencies
from src.core.ingest_real_data import load_graph, load_signals
from src.core.signals import (
    SignalEnsemble,
    covariance_factor,
    make_rng,
    sample_covariance,
    stationarity_proxy,
)
from src.tools.dual_frequency import (
    ScpConfig,
    ScpResult,
    SubspaceProblem,
    ambiguity_correct,
    make_starts,
    multi_start,
    pne,
    subspace_problem,
)
from src.tools.synthetic import GraphDataset, SynthConfig, synth_dataset
from src.tools.tap_estimation import (
    AltMinConfig,
    TapEstimate,
    estimate_taps_io,
    estimate_taps_output_only,
    nse,
    shift_input,
)

# =====================================================================
# 0. LOGGING CONFIGURATION
# =====================================================================
_log_cfg = config.get_section("logging")
logging.basicConfig(
    level=_log_cfg.get("level", "INFO"),
    format=_log_cfg.get("format", "%(asctime)s | %(levelname)-8s | %(name)s | %(message)s"),
    datefmt=_log_cfg.get("datefmt", "%Y-%m-%d %H:%M:%S"),
)
logger = logging.getLogger(__name__)

MODES = ("io", "output_only")


def normalize_mode(mode: str) -> str:
    mode = mode.replace("-", "_")
    if mode not in MODES:
        raise ConfigValidationError(f"mode must be 'io' or 'output-only', got '{mode}'")
    return mode


@dataclass(frozen=True)
class SolverConfig:
    """Orders, SCP/alternating-minimization settings and the start grid for one pipeline run."""

    L: int
    K: int
    scp: ScpConfig = field(default_factory=ScpConfig.from_dict)
    altmin: AltMinConfig = field(default_factory=AltMinConfig.from_dict)
    u_min: float = -1.0
    u_max: float = 1.0
    delta: float = 10.0

    def __post_init__(self):
        if not 1 <= self.K <= self.L:
            raise ConfigValidationError(f"Orders must satisfy 1 <= K <= L, got K={self.K}, L={self.L}")

    @classmethod
    def for_dataset(
        cls,
        dataset: GraphDataset,
        scp: Optional[ScpConfig] = None,
        altmin: Optional[AltMinConfig] = None,
        L: Optional[int] = None,
        K: Optional[int] = None,
    ) -> "SolverConfig":
        synth = dataset.config or SynthConfig.from_dict()
        return cls(
            L=synth.L if L is None else L,
            K=synth.K if K is None else K,
            scp=ScpConfig.from_dict() if scp is None else scp,
            altmin=AltMinConfig.from_dict() if altmin is None else altmin,
            u_min=synth.u_min,
            u_max=synth.u_max,
            delta=synth.delta,
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class PipelineReport:
    mode: str
    residual_nse: float
    corollary_error: float
    objective: float
    lambda_f_tilde: np.ndarray
    lambda_f_start: np.ndarray
    start_index: int = 0
    iterations: int = 0
    nse_taps: Optional[float] = None
    pne: Optional[float] = None
    stationarity: Optional[float] = None
    lambda_f_corrected: Optional[np.ndarray] = None
    warnings: Tuple[str, ...] = ()
    timings: Dict[str, float] = field(default_factory=dict)
    config_echo: Dict[str, Any] = field(default_factory=dict)

    def metrics(self) -> Dict[str, Optional[float]]:
        return {
            "residual_nse": self.residual_nse,
            "nse_taps": self.nse_taps,
            "pne": self.pne,
            "corollary_error": self.corollary_error,
            "objective": self.objective,
            "stationarity": self.stationarity,
        }

    def to_json(self, include_timings: bool = True) -> Dict[str, Any]:
        payload = {
            "mode": self.mode,
            **{k: v for k, v in self.metrics().items() if v is not None},
            "start_index": self.start_index,
            "iterations": self.iterations,
            "lambda_f_tilde": self.lambda_f_tilde.tolist(),
            "warnings": list(self.warnings),
            "config_echo": self.config_echo,
        }
        if self.lambda_f_corrected is not None:
            payload["lambda_f_corrected"] = self.lambda_f_corrected.tolist()
        if include_timings:
            payload["timings"] = dict(self.timings)
        return payload


# =====================================================================
# 1. DEFINE THE GRAPH STATE
# =====================================================================
def _merge_timings(left: Dict[str, float], right: Dict[str, float]) -> Dict[str, float]:
    return {**(left or {}), **(right or {})}


class PipelineState(TypedDict, total=False):
    dataset: GraphDataset
    mode: str
    solver: SolverConfig

    tap_estimate: TapEstimate
    subspace: SubspaceProblem
    starts: List[np.ndarray]
    scp_result: ScpResult
    metrics: Dict[str, Any]

    warnings: Annotated[List[str], operator.add]
    timings: Annotated[Dict[str, float], _merge_timings]


def _run_stage(name: str, fn: Callable[[], Dict[str, Any]]) -> Dict[str, Any]:
    """Time ``fn`` and collect the warnings it raises into the state update."""
    start = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            update = fn()
        except Exception as e:
            logger.error(f"❌ [{name}] Stage failed: {e}", exc_info=True)
            raise
    messages = [f"{name}: {w.message}" for w in caught]
    for msg in messages:
        logger.warning(f"⚠️ {msg}")
    update["warnings"] = messages
    update["timings"] = {name: time.perf_counter() - start}
    return update


# =====================================================================
# 2. DEFINE THE GRAPH NODES
# =====================================================================
def tap_estimation_node(state: PipelineState) -> Dict[str, Any]:
    logger.info("▶️ [STEP 1] EXECUTING TAP ESTIMATION NODE...")
    dataset, solver = state["dataset"], state["solver"]

    def stage():
        if state["mode"] == "io":
            if dataset.X is None:
                raise ConfigValidationError("Input-output estimation needs input signals X")
            estimate = estimate_taps_io(dataset.X, dataset.Y, dataset.S, solver.L)
        else:
            estimate = estimate_taps_output_only(dataset.Y, dataset.S, solver.L, solver.altmin)
        return {"tap_estimate": estimate}

    return _run_stage("TapEstimation", stage)


def subspace_node(state: PipelineState) -> Dict[str, Any]:
    logger.info("▶️ [STEP 2] EXECUTING SUBSPACE NODE...")
    P_tilde = state["tap_estimate"].taps.P
    return _run_stage("Subspace", lambda: {"subspace": subspace_problem(P_tilde, state["solver"].K)})


def dual_frequency_node(state: PipelineState) -> Dict[str, Any]:
    logger.info("▶️ [STEP 3] EXECUTING DUAL FREQUENCY NODE...")
    dataset, solver = state["dataset"], state["solver"]
    seed = dataset.start_seed if dataset.start_seed is not None else solver.scp.seed

    def stage():
        starts = make_starts(
            dataset.S.N, solver.u_min, solver.u_max, solver.scp.num_starts, solver.delta, seed
        )
        return {"starts": starts, "scp_result": multi_start(state["subspace"], starts, solver.scp)}

    return _run_stage("DualFrequency", stage)


def metrics_node(state: PipelineState) -> Dict[str, Any]:
    logger.info("▶️ [STEP 4] EXECUTING METRICS NODE...")
    dataset, solver = state["dataset"], state["solver"]
    estimate, result = state["tap_estimate"], state["scp_result"]

    def stage():
        P_tilde = estimate.taps.P
        model = expansion_from_estimate(P_tilde, result.lambda_f, dataset.S, solver.K)
        metrics: Dict[str, Any] = {
            "residual_nse": estimate.residual_nse,
            "corollary_error": corollary_error(model, dataset.S, primal=NodeVariantTaps(P_tilde)),
        }
        try:
            metrics["stationarity"] = stationarity_proxy(dataset.Y, dataset.S)
        except ZeroCovariance as e:
            logger.warning(f"⚠️ [Metrics] Stationarity proxy skipped: {e}")
        if dataset.P is not None:
            metrics["nse_taps"] = nse(P_tilde, dataset.P)
        if dataset.lambda_f is not None:
            metrics["pne"] = pne(result.lambda_f, dataset.lambda_f)
            metrics["lambda_f_corrected"] = ambiguity_correct(result.lambda_f, dataset.lambda_f)
        return {"metrics": metrics}

    return _run_stage("Metrics", stage)


# =====================================================================
# 3. BUILD AND COMPILE THE LANGGRAPH WORKFLOW
# =====================================================================
workflow = StateGraph(PipelineState)

workflow.add_node("Tap_Estimation", tap_estimation_node)
workflow.add_node("Subspace_Fitting", subspace_node)
workflow.add_node("Dual_Frequency", dual_frequency_node)
workflow.add_node("Metrics", metrics_node)

workflow.set_entry_point("Tap_Estimation")
workflow.add_edge("Tap_Estimation", "Subspace_Fitting")
workflow.add_edge("Subspace_Fitting", "Dual_Frequency")
workflow.add_edge("Dual_Frequency", "Metrics")
workflow.add_edge("Metrics", END)

pipeline_app = workflow.compile()


def run_pipeline(
    dataset: GraphDataset, mode: str = "io", solver_cfg: Optional[SolverConfig] = None
) -> PipelineReport:
    """Tap estimation, subspace fitting, multi-start SCP and metrics on one dataset."""
    mode = normalize_mode(mode)
    solver_cfg = SolverConfig.for_dataset(dataset) if solver_cfg is None else solver_cfg
    logger.info(f"🚀 [Pipeline] Starting {mode} run (N={dataset.S.N}, L={solver_cfg.L}, K={solver_cfg.K})")

    final = pipeline_app.invoke(
        {"dataset": dataset, "mode": mode, "solver": solver_cfg, "warnings": [], "timings": {}}
    )
    metrics, result = final["metrics"], final["scp_result"]
    echo = {"mode": mode, "solver": solver_cfg.to_dict()}
    if dataset.config is not None:
        echo["synth"] = dataset.config.to_dict()

    report = PipelineReport(
        mode=mode,
        residual_nse=metrics["residual_nse"],
        corollary_error=metrics["corollary_error"],
        objective=result.objective,
        lambda_f_tilde=result.lambda_f,
        lambda_f_start=final["starts"][result.start_index],
        start_index=result.start_index,
        iterations=result.iterations,
        nse_taps=metrics.get("nse_taps"),
        pne=metrics.get("pne"),
        stationarity=metrics.get("stationarity"),
        lambda_f_corrected=metrics.get("lambda_f_corrected"),
        warnings=tuple(final.get("warnings", [])),
        timings=dict(final.get("timings", {})),
        config_echo=echo,
    )
    logger.info(
        "✅ [Pipeline] Done: "
        + ", ".join(f"{k}={v:.3e}" for k, v in report.metrics().items() if v is not None)
    )
    return report


# =====================================================================
# 4. DATA PREPARATION AND RESULT VIEWS
# =====================================================================
def whiten_pair(
    Y, seed=None, T: Optional[int] = None, factor_choice: str = "sym_sqrt"
) -> Tuple[SignalEnsemble, SignalEnsemble]:
    """White input ``X'`` and ``Y' = R X'`` with ``R R^T`` the sample covariance of ``Y``."""
    Y = Y if isinstance(Y, SignalEnsemble) else SignalEnsemble(Y)
    if Y.T < 2:
        raise ConfigValidationError(f"Whitening needs at least 2 realizations, got T={Y.T}")
    R = covariance_factor(sample_covariance(Y), factor_choice)
    X_new = make_rng(seed).standard_normal((Y.N, Y.T if T is None else T))
    logger.info(f"🔁 [Pipeline] Whitened pair generated (N={Y.N}, T'={X_new.shape[1]})")
    return SignalEnsemble(X_new), SignalEnsemble(R @ X_new)


def threshold_edges(S_f, keep_fraction: Optional[float] = None) -> pd.DataFrame:
    """Largest off-diagonal entries of ``S_f`` by magnitude; ``ceil(fraction * pairs)`` are kept."""
    if keep_fraction is None:
        keep_fraction = float(config.get_section("pipeline").get("keep_fraction", 0.5))
    if not 0 < keep_fraction <= 1:
        raise ConfigValidationError(f"keep_fraction must lie in (0, 1], got {keep_fraction}")
    M = np.asarray(S_f.matrix if isinstance(S_f, DualGraph) else S_f, dtype=float)

    rows, cols = np.nonzero(np.triu(M, k=1))
    weights = M[rows, cols]
    order = np.argsort(-np.abs(weights), kind="stable")
    count = math.ceil(keep_fraction * len(weights))
    keep = order[:count]
    return pd.DataFrame({"source": rows[keep], "target": cols[keep], "weight": weights[keep]})


def eigenvalue_scatter(report: PipelineReport, dataset: Optional[GraphDataset] = None) -> pd.DataFrame:
    n = report.lambda_f_tilde.size
    truth = dataset.lambda_f if dataset is not None and dataset.lambda_f is not None else np.full(n, np.nan)
    corrected = report.lambda_f_corrected if report.lambda_f_corrected is not None else np.full(n, np.nan)
    return pd.DataFrame(
        {
            "index": np.arange(n),
            "lambda_f": truth,
            "lambda_f_corrected": corrected,
            "lambda_f_start": report.lambda_f_start,
            "lambda_f_tilde": report.lambda_f_tilde,
        }
    )


def learned_dual_graph(dataset: GraphDataset, report: PipelineReport) -> DualGraph:
    lam = report.lambda_f_corrected if report.lambda_f_corrected is not None else report.lambda_f_tilde
    return dual_from_frequencies(dataset.S, lam)


def load_real_dataset(
    graph_path,
    signals_path,
    kind: str = "adjacency",
    inputs_path=None,
    lag: int = 0,
    whiten: bool = False,
    seed=None,
) -> GraphDataset:
    """Real signals with rows centered; inputs come from a file, a lag shift or whitening."""
    S = load_graph(graph_path, kind)
    Y = load_signals(signals_path, centered=True)
    X = load_signals(inputs_path, centered=True) if inputs_path else None

    if lag:
        X_data, Y_data = shift_input(Y, lag)
        X, Y = SignalEnsemble(X_data).center(), SignalEnsemble(Y_data).center()
    if whiten:
        columns = config.get_section("pipeline").get("whiten_columns")
        X, Y = whiten_pair(Y, seed=seed, T=columns)
    return GraphDataset(S=S, Y=Y, X=X)


def _to_db(value: Optional[float]) -> float:
    if value is None or value <= 0:
        return float("-inf") if value == 0 else float("nan")
    return 10.0 * math.log10(value)


def sweep(
    base_cfg: SynthConfig,
    deltas: Iterable[float],
    sigmas: Iterable[float],
    orders: Iterable[int],
    seeds: Iterable[int],
    mode: str = "io",
    scp: Optional[ScpConfig] = None,
) -> pd.DataFrame:
    """PNE/NSE over a grid of jitter, noise and ``L = K`` orders, one row per seed."""
    grid = list(product(orders, deltas, sigmas, seeds))
    rows = []
    for order, delta, sigma, seed in tqdm(grid, desc="Sweep", disable=None):
        cfg = SynthConfig(**{**base_cfg.to_dict(), "L": order, "K": order, "delta": delta, "sigma": sigma, "seed": seed})
        dataset = synth_dataset(cfg)
        report = run_pipeline(dataset, mode, SolverConfig.for_dataset(dataset, scp=scp))
        rows.append(
            {
                "L": order,
                "K": order,
                "delta": delta,
                "sigma": sigma,
                "seed": seed,
                "nse": report.nse_taps,
                "nse_db": _to_db(report.nse_taps),
                "pne": report.pne,
                "pne_db": _to_db(report.pne),
                "corollary_error": report.corollary_error,
                "objective": report.objective,
            }
        )
    logger.info(f"✅ [Sweep] {len(rows)} runs completed")
    return pd.DataFrame(rows)


if __name__ == "__main__":
    logger.info("=" * 50)
    logger.info("🧭 DUALGRAPH: SYNTHETIC PIPELINE DEMO")
    logger.info("=" * 50)
    demo = synth_dataset(SynthConfig.from_dict())
    print(run_pipeline(demo).to_json(include_timings=False))
