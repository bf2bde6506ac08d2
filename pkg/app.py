import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from src.core.config_manager import load_user_config
from src.core.errors import ConfigValidationError, NumericalError
from src.core.graph import dual_from_frequencies
from src.core.ingest_real_data import (
    load_graph,
    load_json,
    load_matrix,
    load_signals,
    save_frame,
    save_json,
    save_matrix,
    save_signals,
)
from src.core.signals import SignalEnsemble, stationarity_proxy
from src.main_workflow import (
    SolverConfig,
    eigenvalue_scatter,
    learned_dual_graph,
    load_real_dataset,
    normalize_mode,
    run_pipeline,
    sweep,
    threshold_edges,
)
from src.tools.dual_frequency import ScpConfig, make_starts, multi_start, subspace_problem
from src.tools.synthetic import SynthConfig, synth_dataset
from src.tools.tap_estimation import (
    AltMinConfig,
    TapEstimate,
    estimate_taps_io,
    estimate_taps_output_only,
    shift_input,
)

logger = logging.getLogger("dualgraph.cli")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
SHIFT_KINDS = ["adjacency", "laplacian", "normalized_laplacian", "custom"]


# =====================================================================
# CONFIG HELPERS
# =====================================================================
def read_sections(path: Optional[str]) -> Dict[str, Dict[str, Any]]:
    """
    Split a user config into ``synth``/``scp``/``altmin`` overrides.

    Keys outside those sections are treated as ``synth`` fields, so a flat file
    of generator parameters works as well.
    """
    data = load_user_config(path)
    sections = {name: dict(data.get(name) or {}) for name in ("synth", "scp", "altmin")}
    for key, value in data.items():
        if key not in sections:
            sections["synth"][key] = value
    return sections


def _scp_config(sections, args) -> ScpConfig:
    overrides = dict(sections["scp"])
    if getattr(args, "starts", None) is not None:
        overrides["num_starts"] = args.starts
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return ScpConfig.from_dict(overrides)


# =====================================================================
# SUBCOMMANDS
# =====================================================================
def cmd_synth(args) -> int:
    cfg = SynthConfig.from_dict(read_sections(args.config)["synth"])
    dataset = synth_dataset(cfg)
    out = Path(args.out)
    save_matrix(dataset.S.matrix, out / "S.csv")
    save_matrix(dataset.lambda_f[:, None], out / "lambda_f.csv")
    save_matrix(dataset.C, out / "C.csv")
    save_matrix(dataset.P, out / "P.csv")
    save_signals(dataset.X, out / "X.csv")
    save_signals(dataset.Y, out / "Y.csv")
    save_json(cfg.to_dict(), out / "config.json")
    logger.info(f"✅ [CLI] Synthetic dataset written to {out}")
    return EXIT_OK


def cmd_estimate_taps(args) -> int:
    mode = normalize_mode(args.mode)
    S = load_graph(args.graph, args.kind)
    Y = load_signals(args.signals)
    X = load_signals(args.inputs) if args.inputs else None
    if args.shift_input:
        X_data, Y_data = shift_input(Y, args.shift_input)
        X, Y = SignalEnsemble(X_data), SignalEnsemble(Y_data)

    if mode == "io":
        if X is None:
            raise ConfigValidationError("--mode io needs --inputs or --shift-input")
        estimate = estimate_taps_io(X, Y, S, args.order)
    else:
        altmin = AltMinConfig.from_dict(read_sections(args.config)["altmin"])
        estimate = estimate_taps_output_only(Y, S, args.order, altmin)
    save_json(estimate.to_json(), args.out)
    print(f"residual_nse={estimate.residual_nse:.6e}")
    return EXIT_OK


def cmd_learn_dual(args) -> int:
    sections = read_sections(args.config)
    scp = _scp_config(sections, args)
    estimate = TapEstimate.from_json(load_json(args.taps))
    problem = subspace_problem(estimate.taps.P, args.degree)
    starts = make_starts(problem.N, args.u_min, args.u_max, scp.num_starts, args.delta, scp.seed)
    result = multi_start(problem, starts, scp)
    save_json(result.to_json(), args.out)
    print(f"objective={result.objective:.6e} start_index={result.start_index}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    sections = read_sections(args.config)
    scp = _scp_config(sections, args)
    altmin = AltMinConfig.from_dict(sections["altmin"])

    if args.signals:
        if not args.graph:
            raise ConfigValidationError("--signals needs --graph")
        dataset = load_real_dataset(
            args.graph,
            args.signals,
            kind=args.kind,
            inputs_path=args.inputs,
            lag=args.shift_input,
            whiten=args.whiten,
            seed=scp.seed,
        )
        synth = SynthConfig.from_dict(sections["synth"]) if sections["synth"] else None
        solver = SolverConfig(
            L=args.order or (synth.L if synth else 3),
            K=args.degree or (synth.K if synth else 3),
            scp=scp,
            altmin=altmin,
        )
    else:
        dataset = synth_dataset(SynthConfig.from_dict(sections["synth"]))
        solver = SolverConfig.for_dataset(dataset, scp=scp, altmin=altmin, L=args.order, K=args.degree)

    report = run_pipeline(dataset, args.mode, solver)
    save_json(report.to_json(), args.out)
    if args.scatter:
        save_frame(eigenvalue_scatter(report, dataset), args.scatter)
    if args.edges:
        save_frame(threshold_edges(learned_dual_graph(dataset, report), args.keep), args.edges)
    print(json.dumps({k: v for k, v in report.metrics().items() if v is not None}))
    return EXIT_OK


def cmd_stationarity(args) -> int:
    rho = stationarity_proxy(load_signals(args.signals), load_graph(args.graph, args.kind))
    print(f"{rho:.6f}")
    return EXIT_OK


def _read_lambda(path: str) -> np.ndarray:
    if Path(path).suffix == ".json":
        payload = load_json(path)
        for key in ("lambda_f", "lambda_f_corrected", "lambda_f_tilde"):
            if key in payload:
                return np.asarray(payload[key], dtype=float)
        raise ConfigValidationError(f"{path} has no lambda_f entry")
    return load_matrix(path).ravel()


def cmd_dual_graph(args) -> int:
    S = load_graph(args.graph, args.kind)
    dual = dual_from_frequencies(S, _read_lambda(args.lambda_f))
    edges = threshold_edges(dual, args.keep)
    save_frame(edges, args.out)
    print(f"edges={len(edges)}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    sections = read_sections(args.config)
    frame = sweep(
        SynthConfig.from_dict(sections["synth"]),
        deltas=args.deltas,
        sigmas=args.sigmas,
        orders=args.orders,
        seeds=args.seeds,
        mode=args.mode,
        scp=ScpConfig.from_dict(sections["scp"]),
    )
    save_frame(frame, args.out)
    summary = frame.groupby(["L", "delta", "sigma"])[["nse", "pne"]].median()
    print(summary.to_string())
    return EXIT_OK


# =====================================================================
# ARGUMENT PARSER
# =====================================================================
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualgraph", description="Dual graph learning via the generalized graph convolution theorem"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("estimate-taps", help="estimate node-variant filter taps")
    p.add_argument("--mode", default="io", choices=["io", "output-only"])
    p.add_argument("--graph", required=True)
    p.add_argument("--kind", default="adjacency", choices=SHIFT_KINDS)
    p.add_argument("--signals", required=True)
    p.add_argument("--inputs")
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--shift-input", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_estimate_taps)

    p = sub.add_parser("learn-dual", help="learn dual frequencies from estimated taps")
    p.add_argument("--taps", required=True)
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--starts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--u-min", type=float, default=-1.0)
    p.add_argument("--u-max", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=10.0)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_learn_dual)

    p = sub.add_parser("pipeline", help="run the full learning pipeline")
    p.add_argument("--config")
    p.add_argument("--mode", default="io", choices=["io", "output-only"])
    p.add_argument("--graph")
    p.add_argument("--kind", default="adjacency", choices=SHIFT_KINDS)
    p.add_argument("--signals")
    p.add_argument("--inputs")
    p.add_argument("--shift-input", type=int, default=0)
    p.add_argument("--whiten", action="store_true")
    p.add_argument("--order", type=int)
    p.add_argument("--degree", type=int)
    p.add_argument("--starts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--scatter")
    p.add_argument("--edges")
    p.add_argument("--keep", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("stationarity", help="print the stationarity proxy rho")
    p.add_argument("--graph", required=True)
    p.add_argument("--kind", default="adjacency", choices=SHIFT_KINDS)
    p.add_argument("--signals", required=True)
    p.set_defaults(func=cmd_stationarity)

    p = sub.add_parser("dual-graph", help="threshold the dual shift into an edge list")
    p.add_argument("--graph", required=True)
    p.add_argument("--kind", default="adjacency", choices=SHIFT_KINDS)
    p.add_argument("--lambda-f", required=True)
    p.add_argument("--keep", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dual_graph)

    p = sub.add_parser("sweep", help="PNE/NSE sweep over jitter, noise and order")
    p.add_argument("--config")
    p.add_argument("--mode", default="io", choices=["io", "output-only"])
    p.add_argument("--deltas", type=float, nargs="+", default=[1.0, 10.0, 100.0, 1000.0])
    p.add_argument("--sigmas", type=float, nargs="+", default=[0.0])
    p.add_argument("--orders", type=int, nargs="+", default=[3])
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    try:
        return args.func(args)
    except (
        ConfigValidationError,
        FileNotFoundError,
        json.JSONDecodeError,
        pd.errors.ParserError,
        pd.errors.EmptyDataError,
    ) as e:
        logger.error(f"❌ [CLI] Invalid input: {e}")
        return EXIT_VALIDATION
    except (NumericalError, np.linalg.LinAlgError) as e:
        logger.error(f"❌ [CLI] Numerical failure: {e}", exc_info=True)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
