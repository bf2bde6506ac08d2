import numpy as np
import pytest

from src.core.errors import ConfigValidationError, RowMismatch
from src.core.filters import (
    ExpansionModel,
    NodeVariantTaps,
    cgf_matrix,
    corollary_error,
    dual_convolution_split,
    dual_taps,
    expansion_from_estimate,
    nvgf_apply,
    nvgf_matrix,
    primal_taps,
)
from src.core.graph import ShiftOperator, dual_from_frequencies, gft


def _random_shift(rng, N):
    A = rng.standard_normal((N, N))
    return ShiftOperator.from_matrix((A + A.T) / (2.0 * np.sqrt(N)))


def _random_model(rng, N, L, K):
    S = _random_shift(rng, N)
    model = ExpansionModel.from_shift(rng.standard_normal((K, L)), rng.standard_normal(N), S)
    return S, model


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


# =====================================================================
# 1. FILTER EVALUATION
# =====================================================================
def test_cgf_matrix_matches_power_sum(rng):
    S = _random_shift(rng, 8)
    p = rng.standard_normal(4)
    expected = sum(p[l] * np.linalg.matrix_power(S.matrix, l) for l in range(4))
    assert np.allclose(cgf_matrix(p, S), expected, atol=1e-12)


def test_nvgf_flavors_scale_before_or_after_shifting(rng):
    S = _random_shift(rng, 5)
    P = rng.standard_normal((5, 3))
    S2 = S.matrix @ S.matrix
    type_one = np.diag(P[:, 0]) + np.diag(P[:, 1]) @ S.matrix + np.diag(P[:, 2]) @ S2
    type_two = np.diag(P[:, 0]) + S.matrix @ np.diag(P[:, 1]) + S2 @ np.diag(P[:, 2])
    assert np.allclose(nvgf_matrix(NodeVariantTaps(P, "I"), S), type_one)
    assert np.allclose(nvgf_matrix(NodeVariantTaps(P, "II"), S), type_two)


@pytest.mark.parametrize("flavor", ["I", "II"])
def test_recursive_application_matches_filter_matrix(rng, flavor):
    S = _random_shift(rng, 12)
    taps = NodeVariantTaps(rng.standard_normal((12, 4)), flavor)
    X = rng.standard_normal((12, 3))
    assert np.allclose(nvgf_apply(taps, S, X), nvgf_matrix(taps, S) @ X, atol=1e-12)
    assert np.allclose(nvgf_apply(taps, S, X[:, 0]), nvgf_matrix(taps, S) @ X[:, 0], atol=1e-12)


def test_flavors_coincide_for_node_invariant_taps(rng):
    S = _random_shift(rng, 9)
    p = rng.standard_normal(4)
    P = np.outer(np.ones(9), p)
    classical = cgf_matrix(p, S)
    assert np.allclose(nvgf_matrix(NodeVariantTaps(P, "I"), S), classical, atol=1e-12)
    assert np.allclose(nvgf_matrix(NodeVariantTaps(P, "II"), S), classical, atol=1e-12)

    window = rng.standard_normal((9, 1))
    assert np.array_equal(
        nvgf_matrix(NodeVariantTaps(window, "I"), S), nvgf_matrix(NodeVariantTaps(window, "II"), S)
    )


def test_taps_validation(rng):
    taps = NodeVariantTaps(np.ones(4))
    assert taps.P.shape == (4, 1)
    with pytest.raises(ConfigValidationError):
        NodeVariantTaps(np.ones((4, 2)), flavor="III")
    with pytest.raises(RowMismatch):
        nvgf_matrix(NodeVariantTaps(np.ones((3, 2))), _random_shift(rng, 4))


# =====================================================================
# 2. PRIMAL/DUAL CONVERSION
# =====================================================================
def test_convolution_theorem_on_random_instances(rng):
    """200 random consistent models: the primal/dual identity holds to machine precision."""
    for _ in range(200):
        N = int(rng.integers(2, 51))
        L = int(rng.integers(1, 7))
        K = int(rng.integers(1, 7))
        S, model = _random_model(rng, N, L, K)
        assert corollary_error(model, S) <= 1e-14


def test_constant_primal_taps_reduce_to_classical_theorem(rng):
    for _ in range(100):
        N, L = int(rng.integers(2, 30)), int(rng.integers(1, 6))
        S, model = _random_model(rng, N, L, 1)
        p = model.C[0]
        x = rng.standard_normal(N)
        primal = primal_taps(model)
        assert np.allclose(primal.P, np.outer(np.ones(N), p))

        y = nvgf_apply(primal, S, x)
        response = model.psi @ p
        assert np.allclose(gft(S, y), response * gft(S, x), atol=1e-10)


def test_constant_dual_taps_give_vertex_scaling(rng):
    for _ in range(100):
        N, K = int(rng.integers(2, 30)), int(rng.integers(1, 6))
        S, model = _random_model(rng, N, 1, K)
        S_f = dual_from_frequencies(S, model.lambda_f)
        dual = dual_taps(model)
        assert np.allclose(dual.P, np.outer(np.ones(N), model.C[:, 0]))

        H = nvgf_matrix(primal_taps(model), S)
        assert np.allclose(H, np.diag(primal_taps(model).P[:, 0]))
        assert np.allclose(H, S.V @ cgf_matrix(model.C[:, 0], S_f) @ S.V.T, atol=1e-10)


def test_shared_weight_taps_act_as_shifted_window(rng):
    for _ in range(100):
        N, L = int(rng.integers(2, 30)), int(rng.integers(1, 6))
        S = _random_shift(rng, N)
        p = rng.standard_normal(N)
        C = np.vstack([np.zeros(L), np.ones(L)])
        model = ExpansionModel.from_shift(C, p, S)
        assert np.allclose(primal_taps(model).P, np.outer(p, np.ones(L)))

        x = rng.standard_normal(N)
        S_f = dual_from_frequencies(S, p)
        y_hat = gft(S, nvgf_apply(primal_taps(model), S, x))
        window = model.psi @ np.ones(L)
        assert np.allclose(y_hat, S_f.matrix @ (window * gft(S, x)), atol=1e-10)


def test_dual_convolution_split_matches_type_two_filter(rng):
    S, model = _random_model(rng, 10, 3, 2)
    x_hat = rng.standard_normal(10)
    S_f = dual_from_frequencies(S, model.lambda_f)
    y_hat = dual_convolution_split(model, S, x_hat)
    assert np.allclose(y_hat, nvgf_apply(dual_taps(model), S_f, x_hat), atol=1e-10)

    X_hat = rng.standard_normal((10, 4))
    assert dual_convolution_split(model, S, X_hat).shape == (10, 4)


def test_theorem_maps_filtered_spectrum(rng):
    S, model = _random_model(rng, 9, 4, 3)
    x = rng.standard_normal(9)
    y = nvgf_apply(primal_taps(model), S, x)
    S_f = dual_from_frequencies(S, model.lambda_f)
    assert np.allclose(gft(S, y), nvgf_apply(dual_taps(model), S_f, gft(S, x)), atol=1e-10)


def test_expansion_from_estimate_recovers_coefficients(rng):
    S, model = _random_model(rng, 15, 4, 3)
    P = primal_taps(model).P
    recovered = expansion_from_estimate(P, model.lambda_f, S, 3)
    assert np.allclose(recovered.C, model.C, atol=1e-9)
    assert corollary_error(recovered, S, primal=NodeVariantTaps(P)) <= 1e-14


def test_corollary_error_of_zero_filter_is_zero(rng):
    S = _random_shift(rng, 5)
    model = ExpansionModel.from_shift(np.zeros((2, 3)), rng.standard_normal(5), S)
    assert corollary_error(model, S) == 0.0


def test_corollary_error_detects_inconsistent_taps(rng):
    S, model = _random_model(rng, 8, 3, 2)
    wrong = NodeVariantTaps(primal_taps(model).P + rng.standard_normal((8, 3)))
    assert corollary_error(model, S, primal=wrong) > 1e-3


def test_zero_dual_taps_give_unit_corollary_error(rng):
    S, model = _random_model(rng, 8, 3, 2)
    zero_dual = NodeVariantTaps(np.zeros((8, 3)), "II")
    assert corollary_error(model, S, dual=zero_dual) == pytest.approx(1.0)
