import os
import json
import logging
import tempfile
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import pandas as pd

from src.core.errors import ConfigValidationError
from src.core.graph import (
    ShiftOperator,
    shift_from_adjacency,
    shift_laplacian,
    shift_normalized_laplacian,
)
from src.core.signals import SignalEnsemble

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# =====================================================================
# ATOMIC WRITERS
# =====================================================================


def _atomic_write_text(path: PathLike, text: str) -> Path:
    """Write through a temp file in the target directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp_name, path)
    except Exception:
        if os.path.exists(tmp_name):
            os.remove(tmp_name)
        raise
    return path


def save_json(payload: Dict[str, Any], path: PathLike) -> Path:
    out = _atomic_write_text(path, json.dumps(payload, indent=2, default=_json_default))
    logger.info(f"💾 [IO] JSON written to {out}")
    return out


def load_json(path: PathLike) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def save_frame(df: pd.DataFrame, path: PathLike, index: bool = False, header: bool = True) -> Path:
    out = _atomic_write_text(path, df.to_csv(index=index, header=header))
    logger.info(f"💾 [IO] CSV written to {out} ({len(df)} rows)")
    return out


def save_matrix(M, path: PathLike) -> Path:
    return save_frame(pd.DataFrame(np.atleast_2d(M)), path, header=False)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


# =====================================================================
# READERS
# =====================================================================
def _read_table(path: Path, **kwargs) -> pd.DataFrame:
    try:
        return pd.read_csv(path, float_precision="round_trip", **kwargs)
    except pd.errors.EmptyDataError as e:
        raise ConfigValidationError(f"{path} is empty") from e


def load_matrix(path: PathLike) -> np.ndarray:
    """Dense numeric CSV; a non-numeric first row is treated as a header and skipped."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Matrix file not found: {path}")
    df = _read_table(path, header=None)
    first_row = pd.to_numeric(df.iloc[0], errors="coerce")
    if first_row.isna().any():
        logger.info(f"⏭️ [IO] Header row detected in {path.name}. Skipping it.")
        df = df.iloc[1:]
    values = df.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
    if np.isnan(values).any():
        raise ConfigValidationError(f"{path} contains non-numeric or empty cells")
    if not np.isfinite(values).all():
        raise ConfigValidationError(f"{path} contains infinite values")
    return values


def load_edges(path: PathLike, N: Optional[int] = None) -> np.ndarray:
    """Whitespace edge list ``u v [weight]`` with 0-indexed nodes -> symmetric weight matrix."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Edge list not found: {path}")
    df = _read_table(path, sep=r"\s+", header=None, comment="#")
    if df.shape[1] not in (2, 3):
        raise ConfigValidationError(f"{path} must have 2 or 3 columns (u v [weight])")
    try:
        u = df.iloc[:, 0].to_numpy(dtype=int)
        v = df.iloc[:, 1].to_numpy(dtype=int)
        w = df.iloc[:, 2].to_numpy(dtype=float) if df.shape[1] == 3 else np.ones(len(df))
    except (TypeError, ValueError) as e:
        raise ConfigValidationError(f"{path} has non-numeric entries: {e}") from e
    if not np.isfinite(w).all():
        raise ConfigValidationError(f"{path} has non-finite edge weights")
    if (u < 0).any() or (v < 0).any():
        raise ConfigValidationError(f"{path} has negative node indices")

    n_nodes = int(max(u.max(initial=-1), v.max(initial=-1)) + 1) if N is None else N
    W = np.zeros((n_nodes, n_nodes))
    W[u, v] = w
    W[v, u] = w
    return W


def load_weights(path: PathLike) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".edges":
        return load_edges(path)
    if path.suffix == ".csv":
        return load_matrix(path)
    raise ConfigValidationError(f"Unsupported graph format '{path.suffix}' (use .edges or .csv)")


def build_shift(W, kind: str = "adjacency") -> ShiftOperator:
    builders = {
        "adjacency": shift_from_adjacency,
        "laplacian": shift_laplacian,
        "normalized_laplacian": shift_normalized_laplacian,
        "custom": ShiftOperator.from_matrix,
    }
    if kind not in builders:
        raise ConfigValidationError(f"Unknown shift kind '{kind}'")
    return builders[kind](W)


def load_graph(path: PathLike, kind: str = "adjacency") -> ShiftOperator:
    S = build_shift(load_weights(path), kind)
    logger.info(f"📖 [IO] Loaded {kind} shift with N={S.N} from {path}")
    return S


def load_signals(path: PathLike, centered: bool = False) -> SignalEnsemble:
    """CSV with rows = nodes and columns = realizations."""
    data = load_matrix(path)
    Y = SignalEnsemble(data)
    logger.info(f"📖 [IO] Loaded signals N={Y.N}, T={Y.T} from {path}")
    return Y.center() if centered else Y


def save_signals(Y, path: PathLike) -> Path:
    return save_matrix(getattr(Y, "data", Y), path)


def save_graph_edges(S, path: PathLike) -> Path:
    """Upper-triangular nonzero entries of a symmetric matrix as ``u v weight`` lines."""
    M = np.asarray(getattr(S, "matrix", S), dtype=float)
    rows, cols = np.nonzero(np.triu(M, k=1))
    lines = [f"{r} {c} {float(M[r, c])!r}" for r, c in zip(rows, cols)]
    return _atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))
