import numpy as np
import pytest

from src.core.errors import AsymmetricInput, ConfigValidationError, DimensionMismatch, NegativeWeight
from src.core.graph import (
    ShiftOperator,
    dual_from_frequencies,
    gft,
    grid_adjacency,
    igft,
    path_adjacency,
    shift_from_adjacency,
    shift_laplacian,
    shift_normalized_laplacian,
    vandermonde,
)


@pytest.fixture
def ring_shift():
    N = 6
    W = np.zeros((N, N))
    for i in range(N):
        W[i, (i + 1) % N] = W[(i + 1) % N, i] = 1.0
    W[0, 3] = W[3, 0] = 0.5
    return shift_from_adjacency(W)


# =====================================================================
# 1. SHIFT CONSTRUCTION
# =====================================================================
def test_adjacency_validation_errors():
    with pytest.raises(AsymmetricInput):
        shift_from_adjacency(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(NegativeWeight):
        shift_from_adjacency(np.array([[0.0, -1.0], [-1.0, 0.0]]))
    with pytest.raises(ConfigValidationError):
        shift_from_adjacency(np.array([[1.0, 1.0], [1.0, 0.0]]))


def test_edgeless_graph_has_zero_spectrum():
    S = shift_from_adjacency(np.zeros((4, 4)))
    assert np.allclose(S.lam, 0.0)
    assert np.allclose(S.V.T @ S.V, np.eye(4))


def test_laplacian_is_psd_with_zero_eigenvalue(ring_shift):
    L = shift_laplacian(ring_shift.matrix)
    assert L.kind == "laplacian"
    assert L.lam.min() >= -1e-12
    assert abs(L.lam[0]) <= 1e-12
    assert np.allclose(L.matrix.sum(axis=1), 0.0)


def test_normalized_laplacian_keeps_isolated_node_at_zero():
    W = np.zeros((4, 4))
    W[:3, :3] = path_adjacency(3)
    L = shift_normalized_laplacian(W)
    assert not np.any(L.matrix[3])
    assert L.lam.max() <= 2.0 + 1e-12


def test_grid_adjacency_edge_count():
    W = grid_adjacency(2, 3)
    assert W.shape == (6, 6)
    # 2 rows x 2 horizontal edges + 3 columns x 1 vertical edge
    assert W.sum() == 2 * 7
    assert W[0, 1] == 1.0 and W[0, 3] == 1.0 and W[0, 4] == 0.0


# =====================================================================
# 2. FOURIER TRANSFORMS AND DUAL GRAPH
# =====================================================================
def test_gft_round_trip(ring_shift):
    x = np.arange(6.0)
    assert np.allclose(igft(ring_shift, gft(ring_shift, x)), x)
    with pytest.raises(DimensionMismatch):
        gft(ring_shift, np.ones(5))


def test_dual_graph_spectrum_and_eigenvectors(ring_shift):
    lambda_f = np.array([0.3, -1.0, 2.0, 0.0, 5.0, 1.5])
    dual = dual_from_frequencies(ring_shift, lambda_f)
    assert np.allclose(dual.matrix, dual.matrix.T)
    assert np.allclose(np.sort(np.linalg.eigvalsh(dual.matrix)), np.sort(lambda_f))
    assert np.allclose(dual.matrix @ dual.V_f, dual.V_f * lambda_f)


def test_dual_gft_is_inverse_of_dual_igft(ring_shift):
    dual = dual_from_frequencies(ring_shift, np.linspace(-1, 1, 6))
    y = np.random.default_rng(0).standard_normal(6)
    assert np.allclose(dual.gft(dual.igft(y)), y)
    # the dual GFT of a primal spectrum is the primal vertex signal
    x = np.arange(6.0)
    assert np.allclose(dual.gft(gft(ring_shift, x)), x)


def test_dual_of_diagonal_shift_with_own_spectrum_is_self():
    S = ShiftOperator.from_matrix(np.diag([1.0, 2.0, 3.0]))
    dual = dual_from_frequencies(S, S.lam)
    assert np.allclose(dual.matrix, S.matrix)


def test_dual_from_frequencies_rejects_wrong_length(ring_shift):
    with pytest.raises(DimensionMismatch):
        dual_from_frequencies(ring_shift, np.ones(4))


def test_vandermonde_columns_are_powers():
    V = vandermonde([2.0, -1.0, 0.5], 4)
    assert V.matrix.shape == (3, 4)
    assert np.allclose(V.matrix[0], [1.0, 2.0, 4.0, 8.0])
    assert np.allclose(V.matrix[:, 0], 1.0)
    with pytest.raises(ConfigValidationError):
        vandermonde([1.0], 0)
