import warnings

import numpy as np
import pandas as pd
import pytest
from unittest.mock import patch

from src.core.errors import ConfigValidationError, RankDeficientDesign
from src.core.filters import NodeVariantTaps
from src.core.ingest_real_data import save_graph_edges, save_signals
from src.core.signals import SignalEnsemble, sample_covariance, white_ensemble
from src.main_workflow import (
    SolverConfig,
    eigenvalue_scatter,
    learned_dual_graph,
    load_real_dataset,
    pipeline_app,
    run_pipeline,
    sweep,
    tap_estimation_node,
    threshold_edges,
    whiten_pair,
)
from src.tools.dual_frequency import ScpConfig
from src.tools.synthetic import GraphDataset, SynthConfig, synth_dataset
from src.tools.tap_estimation import TapEstimate


@pytest.fixture
def linear_dataset():
    """Small noiseless problem with a first-order dual expansion."""
    return synth_dataset(SynthConfig(N=10, L=2, K=2, T=60, delta=1.0, sigma=0.0, seed=1))


@pytest.fixture
def fast_scp():
    return ScpConfig(max_iters=150, num_starts=2)


# =====================================================================
# 1. NODE ISOLATION TEST
# =====================================================================
@patch("src.main_workflow.estimate_taps_io")
def test_tap_estimation_node_collects_warnings(mock_estimate, linear_dataset):
    def fake_estimate(X, Y, S, L):
        warnings.warn("mock rank deficiency", RankDeficientDesign)
        return TapEstimate(taps=NodeVariantTaps(np.ones((S.N, L))), residual_nse=0.5)

    mock_estimate.side_effect = fake_estimate
    state = {"dataset": linear_dataset, "mode": "io", "solver": SolverConfig.for_dataset(linear_dataset)}

    update = tap_estimation_node(state)

    assert update["tap_estimate"].residual_nse == 0.5
    assert update["warnings"] == ["TapEstimation: mock rank deficiency"]
    assert "TapEstimation" in update["timings"]


def test_io_mode_without_inputs_is_rejected(linear_dataset):
    real_like = GraphDataset(S=linear_dataset.S, Y=linear_dataset.Y)
    with pytest.raises(ConfigValidationError):
        run_pipeline(real_like, "io", SolverConfig(L=2, K=2))


def test_unknown_mode_is_rejected(linear_dataset):
    with pytest.raises(ConfigValidationError):
        run_pipeline(linear_dataset, "input-only")


# =====================================================================
# 2. FULL PIPELINE
# =====================================================================
def test_compiled_graph_runs_all_stages(linear_dataset, fast_scp):
    final = pipeline_app.invoke(
        {
            "dataset": linear_dataset,
            "mode": "io",
            "solver": SolverConfig.for_dataset(linear_dataset, scp=fast_scp),
            "warnings": [],
            "timings": {},
        }
    )
    assert set(final["timings"]) == {"TapEstimation", "Subspace", "DualFrequency", "Metrics"}
    assert len(final["starts"]) == 2


def test_noiseless_linear_pipeline_is_exact(linear_dataset, fast_scp):
    report = run_pipeline(linear_dataset, "io", SolverConfig.for_dataset(linear_dataset, scp=fast_scp))
    assert report.nse_taps <= 1e-12
    assert report.pne <= 1e-8
    assert report.corollary_error <= 1e-8
    assert report.stationarity is not None
    assert np.allclose(report.lambda_f_corrected, linear_dataset.lambda_f, atol=1e-4)


def test_pipeline_is_deterministic(linear_dataset, fast_scp):
    solver = SolverConfig.for_dataset(linear_dataset, scp=fast_scp)
    first = run_pipeline(linear_dataset, "io", solver).to_json(include_timings=False)
    second = run_pipeline(linear_dataset, "io", solver).to_json(include_timings=False)
    assert first == second


def test_real_data_report_has_only_observable_metrics():
    synthetic = synth_dataset(SynthConfig(N=13, L=3, K=3, T=1259, delta=1.0, seed=2))
    real_like = GraphDataset(S=synthetic.S, Y=synthetic.Y, X=synthetic.X)

    report = run_pipeline(real_like, "io", SolverConfig(L=3, K=3, delta=1.0))

    assert report.nse_taps is None and report.pne is None
    assert report.lambda_f_corrected is None
    assert report.corollary_error <= 1e-6
    assert "pne" not in report.to_json()
    assert {"residual_nse", "corollary_error", "stationarity"} <= set(report.to_json())


def test_output_only_pipeline_completes(fast_scp):
    data = synth_dataset(SynthConfig(N=8, L=2, K=2, T=400, delta=1.0, seed=5))
    report = run_pipeline(data, "output-only", SolverConfig.for_dataset(data, scp=fast_scp))
    assert report.mode == "output_only"
    assert np.isfinite(report.corollary_error) and report.corollary_error >= 0
    assert 0 <= report.residual_nse <= 1


@pytest.mark.slow
def test_noiseless_sensor_graph_at_full_scale():
    nse_values, pne_values = [], []
    for seed in range(5):
        data = synth_dataset(SynthConfig(N=40, L=3, K=3, T=3000, delta=1e4, sigma=0.0, seed=seed))
        report = run_pipeline(data, "io")
        nse_values.append(report.nse_taps)
        pne_values.append(report.pne)
    assert np.median(nse_values) <= 1e-12
    assert np.median(pne_values) <= 1e-8


@pytest.mark.slow
def test_noisy_sensor_graph_at_full_scale():
    nse_values, pne_values = [], []
    for seed in range(5):
        data = synth_dataset(SynthConfig(N=40, L=3, K=3, T=3000, delta=1e3, sigma=50.0, seed=seed))
        report = run_pipeline(data, "io")
        nse_values.append(report.nse_taps)
        pne_values.append(report.pne)
    assert 1e-7 <= np.median(nse_values) <= 1e-4
    assert 1e-6 <= np.median(pne_values) <= 1e-3


@pytest.mark.slow
def test_high_order_configuration_runs_to_completion():
    data = synth_dataset(SynthConfig(N=40, L=9, K=9, T=3000, delta=1e3, sigma=0.0, seed=0))
    report = run_pipeline(data, "io")
    assert np.isfinite(report.pne) and report.pne >= 0


# =====================================================================
# 3. DATA PREPARATION AND RESULT VIEWS
# =====================================================================
def test_whiten_pair_reproduces_covariance():
    Y = white_ensemble(10, 10_000, seed=3)
    X_new, Y_new = whiten_pair(Y, seed=4)
    R = Y_new.data @ np.linalg.pinv(X_new.data)
    assert np.linalg.norm(R - np.eye(10)) <= 0.1
    assert np.allclose(R @ R.T, sample_covariance(Y), atol=1e-8)


def test_whiten_pair_large_sample_covariance():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((5, 5))
    Y = SignalEnsemble(A @ rng.standard_normal((5, 2000)))
    _, Y_new = whiten_pair(Y, seed=1, T=100_000)
    C, C_new = sample_covariance(Y), sample_covariance(Y_new)
    assert np.linalg.norm(C_new - C) <= 0.05 * np.linalg.norm(C)


def test_whiten_pair_is_seeded_and_validated():
    Y = white_ensemble(4, 50, seed=0)
    a, b = whiten_pair(Y, seed=9), whiten_pair(Y, seed=9)
    assert np.array_equal(a[1].data, b[1].data)
    with pytest.raises(ConfigValidationError):
        whiten_pair(np.ones((4, 1)))


def test_threshold_edges_counts_and_order():
    M = np.array(
        [
            [9.0, 1.0, -5.0, 0.0],
            [1.0, 9.0, 2.0, 0.5],
            [-5.0, 2.0, 9.0, 0.0],
            [0.0, 0.5, 0.0, 9.0],
        ]
    )
    everything = threshold_edges(M, 1.0)
    assert len(everything) == 4
    assert list(everything["weight"]) == [-5.0, 2.0, 1.0, 0.5]

    half = threshold_edges(M, 0.5)
    assert len(half) == 2
    assert (half["source"] != half["target"]).all()
    assert len(threshold_edges(M, 0.3)) == 2  # ceil(0.3 * 4)

    with pytest.raises(ConfigValidationError):
        threshold_edges(M, 0.0)


def test_sparse_threshold_on_large_graph():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((324, 324))
    edges = threshold_edges(A + A.T, 0.02)
    assert len(edges) <= np.ceil(0.02 * 324 * 323 / 2)


def test_eigenvalue_scatter_and_dual_graph(linear_dataset, fast_scp):
    report = run_pipeline(linear_dataset, "io", SolverConfig.for_dataset(linear_dataset, scp=fast_scp))
    frame = eigenvalue_scatter(report, linear_dataset)
    assert list(frame.columns) == ["index", "lambda_f", "lambda_f_corrected", "lambda_f_start", "lambda_f_tilde"]
    assert len(frame) == linear_dataset.S.N
    dual = learned_dual_graph(linear_dataset, report)
    assert np.allclose(np.sort(np.linalg.eigvalsh(dual.matrix)), np.sort(report.lambda_f_corrected))


def test_load_real_dataset_with_lag_and_whitening(tmp_path, linear_dataset):
    graph = save_graph_edges(linear_dataset.S, tmp_path / "g.edges")
    signals = save_signals(linear_dataset.Y, tmp_path / "y.csv")

    lagged = load_real_dataset(graph, signals, lag=2)
    assert lagged.X.T == lagged.Y.T == linear_dataset.Y.T - 2
    assert np.allclose(lagged.Y.data.mean(axis=1), 0.0)

    whitened = load_real_dataset(graph, signals, whiten=True, seed=0)
    assert whitened.X is not None and whitened.X.data.shape == whitened.Y.data.shape
    assert not whitened.has_ground_truth


def test_sweep_emits_one_row_per_run():
    base = SynthConfig(N=8, L=2, K=2, T=30, seed=0)
    frame = sweep(
        base, deltas=[1.0, 10.0], sigmas=[0.0], orders=[2], seeds=[0, 1], scp=ScpConfig(max_iters=20, num_starts=1)
    )
    assert isinstance(frame, pd.DataFrame)
    assert len(frame) == 4
    assert {"pne", "pne_db", "nse", "nse_db", "corollary_error"} <= set(frame.columns)
