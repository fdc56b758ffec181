"""Command-line entry point: ``templatent {gen,snapshot,fit,eval}``.

Every command writes a JSON run manifest next to its outputs.  Exit codes:
0 on success, 1 when a solver hits a non-finite objective, 2 for usage and
I/O problems.  ``TEMPLATENT_CONFIG`` may point to a JSON file whose keys
(``k``, ``lambda``, ``max_iters``, ``tol``, ``seed``, ``zeta``, ``delta``,
``threads``, ``pairs``, ``mode``) replace the built-in defaults; explicit
flags still win.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import resource
import sys
import time
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .evaluation import evaluate, prediction_error, sample_test_pairs
from .generators import planted_partition_generate, to_temporal_edges
from .global_bcgd import fit_global
from .graph import (DynamicGraph, EdgeListError, load_temporal_edges, read_snapshot, slice_snapshots,
                    write_node_map, write_snapshot, write_temporal_edges)
from .incremental_bcgd import fit_incremental
from .latent import NumericalError, SolverConfig, load_latent, save_latent
from .local_bcgd import fit_local

log = logging.getLogger("templatent")

CONFIG_ENV = "TEMPLATENT_CONFIG"
EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2
_CONFIG_KEYS = {"k": "k", "lambda": "lam", "max_iters": "max_iters", "tol": "tol", "seed": "seed",
                "zeta": "zeta", "delta": "delta", "threads": "threads", "pairs": "pairs", "mode": "mode"}


class UsageError(Exception):
    pass


def _digest(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _peak_rss_mb() -> float:
    # ru_maxrss is KiB on Linux, bytes on macOS
    peak = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    return peak / (1 << 20) if platform.system() == "Darwin" else peak / 1024


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


class Run:
    """Collects what goes into one run manifest."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.start = time.perf_counter()
        self.timings: dict[str, float] = {}
        self.inputs: dict[str, str] = {}
        self.artifacts: list[str] = []
        self.config = {k: v for k, v in vars(args).items() if k not in ("func", "verbose")}
        self.seed = getattr(args, "seed", None)

    def input(self, path) -> None:
        self.inputs[str(path)] = _digest(path)

    def artifact(self, path) -> None:
        self.artifacts.append(str(path))

    def phase(self, name: str, t0: float) -> None:
        self.timings[f"{name}_ms"] = 1000 * (time.perf_counter() - t0)

    def write(self, path: Path, status: str = "ok") -> None:
        self.timings["total_ms"] = 1000 * (time.perf_counter() - self.start)
        _write_json(path, {
            "command": self.command,
            "status": status,
            "version": __version__,
            "config": self.config,
            "seed": self.seed,
            "inputs": self.inputs,
            "artifacts": self.artifacts,
            "timings": self.timings,
            "peak_memory_mb": _peak_rss_mb(),
        })


def _manifest_path(args, default: Path) -> Path:
    return Path(args.manifest) if getattr(args, "manifest", None) else default


# --- gen ----------------------------------------------------------------------

def cmd_gen(args) -> int:
    run = Run("gen", args)
    t0 = time.perf_counter()
    try:
        graph = planted_partition_generate(args.n, args.blocks, args.p_in, args.p_out, args.drift, args.T,
                                           seed=args.seed, resample_all=args.resample_all)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    run.phase("generate", t0)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        fh.write(f"# planted partition n={args.n} blocks={args.blocks} p_in={args.p_in} "
                 f"p_out={args.p_out} drift={args.drift} T={args.T} seed={args.seed}\n")
        write_temporal_edges(fh, to_temporal_edges(graph))
    run.artifact(out)
    run.write(_manifest_path(args, out.with_name(out.name + ".manifest.json")))
    return EXIT_OK


# --- snapshot -----------------------------------------------------------------

def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_snapshot(args) -> int:
    run = Run("snapshot", args)
    src = Path(args.edges)
    run.input(src)
    t0 = time.perf_counter()
    try:
        edges = load_temporal_edges(src)
    except EdgeListError as exc:
        raise UsageError(f"{src}: {exc}") from None
    run.phase("load", t0)
    if edges.rejected_self_loops:
        log.warning("%s: dropped %d self-loop record(s)", src, edges.rejected_self_loops)
    t0 = time.perf_counter()
    try:
        graph = slice_snapshots(edges, T=args.snapshots, boundaries=args.boundaries,
                                start=args.start, end=args.end, binarize=not args.weighted)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    run.phase("slice", t0)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    width = max(3, len(str(graph.T)))
    for tau, snap in enumerate(graph, start=1):
        path = out / f"snapshot_{tau:0{width}d}.txt"
        with open(path, "w") as fh:
            write_snapshot(fh, snap, tau)
        run.artifact(path)
    map_path = out / "node_map.txt"
    with open(map_path, "w") as fh:
        write_node_map(fh, edges.node_ids)
    run.artifact(map_path)
    run.write(_manifest_path(args, out / "manifest_snapshot.json"))
    return EXIT_OK


# --- fit ----------------------------------------------------------------------

def _read_snapshots(paths: Sequence[str]):
    for p in paths:
        yield _read_snapshot(p)


def _read_snapshot(path):
    try:
        return read_snapshot(path)[0]
    except EdgeListError as exc:
        raise UsageError(f"{path}: {exc}") from None


def cmd_fit(args) -> int:
    run = Run("fit", args)
    for p in args.snapshots:
        run.input(p)
    cfg = SolverConfig(k=args.k, lam=args.lam, max_iters=args.max_iters, tol=args.tol, seed=args.seed,
                       zeta=args.zeta, delta=args.delta, threads=args.threads)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    width = max(3, len(str(len(args.snapshots))))

    def sink(tau: int, Z: np.ndarray) -> None:
        path = out / f"latent_{tau:0{width}d}.txt"
        with open(path, "w") as fh:
            save_latent(fh, Z, tau)
        run.artifact(path)

    t0 = time.perf_counter()
    try:
        if args.algo == "global":
            traj = fit_global(DynamicGraph(tuple(_read_snapshots(args.snapshots))), cfg)
            for tau, Z in enumerate(traj.spaces, start=1):
                sink(tau, Z)
        elif args.algo == "local":
            traj = fit_local(_read_snapshots(args.snapshots), cfg, keep_spaces=False, sink=sink)
        else:
            traj = fit_incremental(_read_snapshots(args.snapshots), cfg, keep_spaces=True)
            for tau, Z in enumerate(traj.spaces, start=1):
                sink(tau, Z)
    except NumericalError as exc:
        dump = out / "numerical_failure.json"
        _write_json(dump, {"error": str(exc), "state": exc.state, "config": cfg.to_dict()})
        run.artifact(dump)
        run.write(_manifest_path(args, out / "manifest_fit.json"), status="numerical_failure")
        print(f"error: {exc} (diagnostics in {dump})", file=sys.stderr)
        return EXIT_NUMERIC
    run.phase("fit", t0)

    diag = dict(traj.diagnostics)
    diag.update(objective_trace=traj.objective_trace, iterations_used=traj.iterations_used,
                local_traces=traj.local_traces, config=cfg.to_dict())
    diag_path = out / "diagnostics.json"
    _write_json(diag_path, diag)
    run.artifact(diag_path)
    tsv = out / "objective_trace.tsv"
    with open(tsv, "w") as fh:
        fh.write("step\tobjective\n")
        for i, v in enumerate(traj.objective_trace):
            fh.write(f"{i}\t{v!r}\n")
    run.artifact(tsv)
    run.write(_manifest_path(args, out / "manifest_fit.json"))
    return EXIT_OK


# --- eval ---------------------------------------------------------------------

def cmd_eval(args) -> int:
    run = Run("eval", args)
    run.input(args.latent)
    run.input(args.test)
    with open(args.latent) as fh:
        Z, tau = load_latent(fh)
    G_next = _read_snapshot(args.test)
    if Z.shape[0] != G_next.n:
        raise UsageError(f"latent space has {Z.shape[0]} rows but {args.test} has {G_next.n} nodes")
    G_prev = None
    if args.prev:
        run.input(args.prev)
        G_prev = _read_snapshot(args.prev)
    history = []
    for p in args.history:
        run.input(p)
        history.append(_read_snapshot(p))
    if G_prev is None and history:
        G_prev = history[-1]
    if any(s.n != G_next.n for s in history + ([G_prev] if G_prev is not None else [])):
        raise UsageError("all snapshots must share the test snapshot's node count")
    baselines = [b for b in args.baseline if b != "none"]
    if "aa" in baselines and not history:
        raise UsageError("--baseline aa needs --history")
    if ("gpre" in baselines or args.mode == "new") and G_prev is None:
        raise UsageError("--baseline gpre and --mode new need --prev or --history")

    t0 = time.perf_counter()
    try:
        tps = sample_test_pairs(G_next, args.pairs, args.mode, args.seed, G_prev=G_prev, history=history,
                                exclude_historical=args.exclude_historical)
        report = evaluate(Z, G_next, G_prev=G_prev, history=history, baselines=baselines, test_pairs=tps,
                          config={"latent": Path(args.latent).name, "tau": tau, "test": Path(args.test).name,
                                  "pairs": args.pairs, "mode": args.mode, "seed": args.seed,
                                  "baselines": baselines})
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.history_latents:
        if len(args.history_latents) != len(history) or len(history) < 2:
            raise UsageError("--history-latents needs one file per --history snapshot (at least two)")
        spaces = []
        for p in args.history_latents:
            run.input(p)
            with open(p) as fh:
                spaces.append(load_latent(fh)[0])
        report.prediction_error = prediction_error(DynamicGraph(tuple(history)), spaces)
    run.phase("eval", t0)
    if not args.report_timings:
        # wall-clock numbers live in the manifest so the report stays byte-reproducible
        run.timings.update({f"report_{k}": v for k, v in report.timings.items()})
        report.timings = {}

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_json() + "\n")
    run.artifact(out)
    if args.pairs_out:
        with open(args.pairs_out, "w") as fh:
            tps.write(fh)
        run.artifact(args.pairs_out)
    run.write(_manifest_path(args, out.with_name(out.name + ".manifest.json")))
    print(f"auc_roc={report.auc_roc:.6f} auc_pr={report.auc_pr:.6f} pairs={report.n_pairs}")
    return EXIT_OK


# --- parser -------------------------------------------------------------------

def _load_config_defaults() -> dict:
    path = os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {CONFIG_ENV}={path}: {exc}") from None
    unknown = set(raw) - set(_CONFIG_KEYS)
    if unknown:
        raise UsageError(f"unknown key(s) in {path}: {', '.join(sorted(unknown))}")
    return {_CONFIG_KEYS[k]: v for k, v in raw.items()}


def build_parser(defaults: dict | None = None) -> argparse.ArgumentParser:
    d = defaults or {}
    parser = argparse.ArgumentParser(prog="templatent",
                                     description="Temporal latent spaces for link prediction.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic planted-partition edge list")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--blocks", type=int, required=True)
    p.add_argument("--p-in", type=float, required=True)
    p.add_argument("--p-out", type=float, required=True)
    p.add_argument("--drift", type=float, default=0.0)
    p.add_argument("--T", type=int, default=1)
    p.add_argument("--seed", type=int, default=d.get("seed", 0))
    p.add_argument("--resample-all", action="store_true",
                   help="draw every snapshot afresh instead of carrying unaffected edges over")
    p.add_argument("--out", "-o", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("snapshot", help="slice a timestamped edge list into snapshot files")
    p.add_argument("edges")
    cut = p.add_mutually_exclusive_group(required=True)
    cut.add_argument("--snapshots", "-T", type=int, help="number of equal-width intervals")
    cut.add_argument("--boundaries", type=_floats, help="explicit cut points, e.g. '0,1,2'")
    p.add_argument("--start", type=float, help="left end of the equal-width range")
    p.add_argument("--end", type=float, help="right end of the equal-width range")
    w = p.add_mutually_exclusive_group()
    w.add_argument("--binarize", dest="weighted", action="store_false",
                   help="store every edge with weight 1 (default)")
    w.add_argument("--weighted", dest="weighted", action="store_true",
                   help="store summed interaction weights")
    p.set_defaults(weighted=False)
    p.add_argument("--out-dir", "-o", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_snapshot)

    p = sub.add_parser("fit", help="infer latent spaces from snapshot files")
    p.add_argument("snapshots", nargs="+", help="snapshot files in time order")
    p.add_argument("--algo", choices=("global", "local", "incremental"), default="local")
    p.add_argument("--k", type=int, default=d.get("k", 20))
    p.add_argument("--lambda", dest="lam", type=float, default=d.get("lam"),
                   help="smoothness weight (default 1e-4 global, 1e-2 otherwise)")
    p.add_argument("--max-iters", type=int, default=d.get("max_iters", 100))
    p.add_argument("--tol", type=float, default=d.get("tol", 1e-4))
    p.add_argument("--seed", type=int, default=d.get("seed", 0))
    p.add_argument("--zeta", type=float, default=d.get("zeta"))
    p.add_argument("--delta", type=float, default=d.get("delta"))
    p.add_argument("--threads", type=int, default=d.get("threads", 1))
    p.add_argument("--out-dir", "-o", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="score held-out pairs with a fitted latent space")
    p.add_argument("latent", help="latent file of the last training snapshot")
    p.add_argument("test", help="snapshot file being predicted")
    p.add_argument("--prev", help="last training snapshot (new-links mode, gpre baseline)")
    p.add_argument("--history", nargs="*", default=[], help="training snapshots (aa baseline)")
    p.add_argument("--history-latents", nargs="*", default=[],
                   help="latent files matching --history; adds the prediction error")
    p.add_argument("--mode", choices=("all", "new"), default=d.get("mode", "all"))
    p.add_argument("--pairs", type=int, default=d.get("pairs", 100_000), help="pairs per class")
    p.add_argument("--seed", type=int, default=d.get("seed", 0))
    p.add_argument("--baseline", action="append", choices=("aa", "gpre", "none"), default=[])
    p.add_argument("--exclude-historical", action="store_true",
                   help="never sample pairs linked in --history as non-linked")
    p.add_argument("--pairs-out", help="write the sampled pairs as 'u v label'")
    p.add_argument("--report-timings", action="store_true",
                   help="keep wall-clock timings inside the report")
    p.add_argument("--out", "-o", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_eval)
    return parser


def _check_args(args) -> None:
    for name in ("n", "blocks", "T", "snapshots", "k", "max_iters", "threads", "pairs"):
        val = getattr(args, name, None)
        if isinstance(val, int) and not isinstance(val, bool) and val < 1:
            raise UsageError(f"--{name.replace('_', '-')} must be >= 1")


def main(argv: Sequence[str] | None = None) -> int:
    try:
        defaults = _load_config_defaults()
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    parser = build_parser(defaults)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    fmt = warnings.formatwarning
    warnings.formatwarning = _format_warning
    try:
        _check_args(args)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (UsageError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        warnings.formatwarning = fmt


def _format_warning(message, category, filename, lineno, line=None) -> str:
    return f"warning: {message}\n"


if __name__ == "__main__":
    sys.exit(main())
