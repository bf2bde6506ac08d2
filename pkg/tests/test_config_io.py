import numpy as np
import pandas as pd
import pytest

from src.core.config_manager import config, load_user_config, merged_section
from src.core.errors import ConfigValidationError
from src.core.graph import ShiftOperator
from src.core.ingest_real_data import (
    load_edges,
    load_graph,
    load_matrix,
    load_signals,
    save_frame,
    save_graph_edges,
    save_json,
    load_json,
)


# =====================================================================
# 1. CONFIG MANAGER
# =====================================================================
def test_singleton_serves_yaml_defaults():
    assert config.get_section("scp")["alpha_grid"] == 64
    assert config.get_tolerance("theorem") == pytest.approx(1e-10)
    assert config.get_section("does_not_exist") == {}


def test_unknown_tolerance_is_rejected():
    with pytest.raises(ConfigValidationError):
        config.get_tolerance("nope")


def test_merged_section_overlays_and_rejects():
    values = merged_section("scp", {"max_iters": 7}, {"max_iters", "seed"})
    assert values == {"max_iters": 7, "seed": 0}
    with pytest.raises(ConfigValidationError):
        merged_section("scp", {"radius": 1.0}, {"max_iters"})


def test_user_config_files(tmp_path):
    assert load_user_config(None) == {}
    listing = tmp_path / "list.yaml"
    listing.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigValidationError):
        load_user_config(listing)
    with pytest.raises(FileNotFoundError):
        load_user_config(tmp_path / "missing.yaml")


# =====================================================================
# 2. READERS AND WRITERS
# =====================================================================
def test_matrix_header_is_skipped(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("a,b\n1,2\n3,4\n")
    assert np.array_equal(load_matrix(path), np.array([[1.0, 2.0], [3.0, 4.0]]))


def test_matrix_with_empty_cell_is_rejected(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("1,2\n3,\n")
    with pytest.raises(ConfigValidationError):
        load_matrix(path)


@pytest.mark.parametrize("content", ["1,2\ninf,4\n", "1,2\n3,nan\n", ""])
def test_non_finite_or_empty_matrix_is_rejected(tmp_path, content):
    path = tmp_path / "m.csv"
    path.write_text(content)
    with pytest.raises(ConfigValidationError):
        load_matrix(path)


def test_edge_list_with_text_indices_is_rejected(tmp_path):
    path = tmp_path / "g.edges"
    path.write_text("a b 1.0\n")
    with pytest.raises(ConfigValidationError):
        load_edges(path)
    path.write_text("0 1 inf\n")
    with pytest.raises(ConfigValidationError):
        load_edges(path)


def test_edge_list_is_symmetrized(tmp_path):
    path = tmp_path / "g.edges"
    path.write_text("# ring\n0 1 1.0\n1 2 0.5\n")
    W = load_edges(path)
    assert np.array_equal(W, np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.5], [0.0, 0.5, 0.0]]))
    assert load_edges(path, N=5).shape == (5, 5)


def test_unknown_graph_format_and_kind(tmp_path):
    path = tmp_path / "g.txt"
    path.write_text("0 1\n")
    with pytest.raises(ConfigValidationError):
        load_graph(path)
    edges = tmp_path / "g.edges"
    edges.write_text("0 1\n")
    with pytest.raises(ConfigValidationError):
        load_graph(edges, kind="incidence")


def test_saved_edges_reload_exactly(tmp_path):
    rng = np.random.default_rng(0)
    A = np.triu(rng.uniform(0.1, 1.0, (6, 6)), k=1)
    S = ShiftOperator.from_matrix(A + A.T)
    reloaded = load_graph(save_graph_edges(S, tmp_path / "s.edges"), kind="custom")
    assert np.array_equal(reloaded.matrix, S.matrix)


def test_signals_can_be_centered_on_load(tmp_path):
    path = tmp_path / "y.csv"
    path.write_text("1,3\n2,6\n")
    Y = load_signals(path, centered=True)
    assert Y.centered
    assert np.allclose(Y.data, [[-1.0, 1.0], [-2.0, 2.0]])


def test_writers_leave_no_temp_files(tmp_path):
    save_json({"value": np.float64(1.5), "array": np.arange(3)}, tmp_path / "out" / "r.json")
    save_frame(pd.DataFrame({"a": [1, 2]}), tmp_path / "out" / "f.csv")
    assert load_json(tmp_path / "out" / "r.json") == {"value": 1.5, "array": [0, 1, 2]}
    assert sorted(p.name for p in (tmp_path / "out").iterdir()) == ["f.csv", "r.json"]
