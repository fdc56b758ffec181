"""Incremental inference: only nodes touched by graph changes are revisited.

For each new snapshot the previous space is copied, rows of nodes whose
neighbourhood changed are re-seeded from their neighbours, and then only an
*affected set* of nodes is updated.  After every pass the set drops nodes
whose coordinates all moved by less than ``delta`` and admits neighbours
whose pairwise score moved by at least ``zeta``.
"""
from __future__ import annotations

import logging
from typing import Iterable

import numpy as np

from . import _kernels as K
from ._sweep import converged, ensure_finite, run_sweep
from .generators import make_rng
from .graph import GraphSnapshot, diff_snapshots
from .latent import (SolverConfig, Trajectory, lipschitz_constant, local_objective,
                     step_coefficient)
from .local_bcgd import fit_first

log = logging.getLogger(__name__)


def init_updated_rows(snap: GraphSnapshot, Z_prev: np.ndarray, changed_nodes) -> np.ndarray:
    """Copy ``Z_prev`` and re-seed changed rows as the weighted mean of neighbour rows.

    Changed nodes are processed in ascending order and see rows already
    re-seeded earlier in the pass.  A changed node without neighbours gets
    the uniform row.
    """
    Z = np.array(Z_prev, dtype=np.float64, order="C")
    nodes = np.asarray(changed_nodes, dtype=np.int64)
    K.neighbour_average(snap.indptr, snap.indices, snap.data, Z, np.sort(nodes))
    return Z


class AffectedSet:
    """Working set of nodes for one incremental pass and its generation counter."""

    __slots__ = ("members", "generation")

    def __init__(self, members, generation: int = 0):
        self.members = np.asarray(members, dtype=np.int64)
        self.generation = generation

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members.tolist())

    def __repr__(self) -> str:
        return f"AffectedSet({len(self.members)} nodes, r={self.generation})"


def refresh_affected_set(Z_cur: np.ndarray, Z_before: np.ndarray, S_old, snap: GraphSnapshot,
                         delta_thresh: float, zeta_thresh: float) -> AffectedSet:
    """Shrink/grow the affected set after one pass.

    ``Z_before`` is the iterate before the pass (full ``(n, k)`` array).
    Nodes are scanned in ascending order: a node leaves the set when every
    coordinate moved by less than ``delta_thresh``; each neighbour ``w`` joins
    when ``|z_u . z_w|`` changed by at least ``zeta_thresh``.
    """
    if delta_thresh < 0 or zeta_thresh < 0:
        raise ValueError("thresholds must be nonnegative")
    generation = S_old.generation + 1 if isinstance(S_old, AffectedSet) else 1
    members = np.sort(np.asarray(S_old.members if isinstance(S_old, AffectedSet) else list(S_old),
                                 dtype=np.int64))
    old_rows = np.ascontiguousarray(Z_before[members], dtype=np.float64)
    # rows outside S_old were not touched, so Z_cur is their pre-pass value too
    if len(members):
        outside = np.ones(Z_cur.shape[0], dtype=bool)
        outside[members] = False
        if not np.array_equal(Z_cur[outside], Z_before[outside]):
            raise ValueError("rows outside the affected set changed between iterates")
    n = Z_cur.shape[0]
    out = K.refresh_affected(snap.indptr, snap.indices, np.ascontiguousarray(Z_cur, dtype=np.float64),
                             members, old_rows, float(delta_thresh), float(zeta_thresh),
                             np.zeros(n, dtype=np.bool_), np.full(n, -1, dtype=np.int64))
    return AffectedSet(out, generation)


def refine_affected(snap: GraphSnapshot, Z: np.ndarray, Z_prev: np.ndarray, S: np.ndarray, lam: float,
                    zeta: float, delta: float, cfg: SolverConfig, L: float, force_all: bool = False,
                    history: list | None = None):
    """Iterate conditional updates over the affected set, in place on ``Z``.

    ``force_all`` keeps every node in the set on every pass (used to check
    that the inner updates coincide with the sequential solver's).  When
    ``history`` is a list, each pass's set is appended to it.
    Returns ``(trace, iterations, set_sizes, row_work)``.
    """
    n = snap.n
    indptr, indices = snap.indptr, snap.indices
    S = np.asarray(S, dtype=np.int64)
    everyone = np.arange(n, dtype=np.int64)
    if force_all:
        S = everyone
    member = np.zeros(n, dtype=np.bool_)
    pos = np.full(n, -1, dtype=np.int64)
    gram = K.gram_of(Z)
    obj = local_objective(snap, Z, Z_prev, lam)
    ensure_finite(obj, "incremental init")
    trace = [obj]
    sizes = []
    work = 0
    r = 0
    while len(S) and r < cfg.max_iters:
        alpha = step_coefficient(r, L)
        old_rows = Z[S]
        union, deg = K.closed_neighbourhood_size(indptr, indices, S, member)
        sizes.append((int(len(S)), int(deg), int(union)))
        if history is not None:
            history.append(S.copy())
        w, d = run_sweep(snap, Z, gram, Z_prev, None, alpha, lam, S, cfg.threads)
        work += w
        new = obj + d
        ensure_finite(new, "incremental pass", iteration=r + 1, trace=trace)
        trace.append(new)
        r += 1
        if force_all:
            S = everyone
        else:
            S = K.refresh_affected(indptr, indices, Z, S, old_rows, delta, zeta, member, pos)
        if converged(obj, new, cfg.tol):
            break
        obj = new
    return trace, r, sizes, work


def fit_incremental(G: Iterable[GraphSnapshot], cfg: SolverConfig | None = None,
                    keep_spaces: bool = True) -> Trajectory:
    """Fit ``Z_1`` like the sequential solver, then maintain it snapshot by snapshot.

    Diagnostics carry, per snapshot, the list of ``(|S_r|, sum of degrees
    over S_r, |S_r ∪ N(S_r)|)`` and the total ``work`` as the sum of
    ``|S_r ∪ N(S_r)|`` over all passes (the first snapshot counts ``n`` per
    sweep).
    """
    cfg = cfg or SolverConfig()
    lam = cfg.lam_for("incremental")
    rng = make_rng(cfg.seed)
    it = iter(G)
    snap = next(it, None)
    if snap is None:
        raise ValueError("no snapshots to fit")
    n = snap.n
    zeta, delta = cfg.thresholds(n)
    L = lipschitz_constant(n, cfg.k)

    Z, trace, sweeps, row_work = fit_first(snap, cfg, L, rng)
    spaces = [Z]
    traces, iters = [trace], [sweeps]
    set_sizes = [[(n, int(snap.adjacency.nnz), n)] * sweeps]
    work = n * sweeps
    changed_counts = [n]
    prev_snap = snap
    for snap in it:
        if snap.n != n:
            raise ValueError("all snapshots must share the same node count")
        Z_prev = Z
        delta_g = diff_snapshots(prev_snap, snap)
        changed = delta_g.changed_nodes
        Z = init_updated_rows(snap, Z_prev, changed)
        trace, r, sizes, w = refine_affected(snap, Z, Z_prev, changed, lam, zeta, delta, cfg, L)
        log.debug("incremental tau=%d changed=%d passes=%d", len(traces) + 1, len(changed), r)
        traces.append(trace)
        iters.append(r)
        set_sizes.append(sizes)
        changed_counts.append(int(len(changed)))
        work += sum(s[2] for s in sizes)
        row_work += w
        if keep_spaces:
            spaces.append(Z)
        else:
            spaces = [Z]
        prev_snap = snap
    return Trajectory(
        spaces=spaces,
        objective_trace=[v for t in traces for v in t],
        iterations_used=iters,
        local_traces=traces,
        diagnostics={"algo": "incremental", "lambda": lam, "L": L, "zeta": zeta, "delta": delta,
                     "work": work, "row_work": row_work, "set_sizes": set_sizes,
                     "changed_nodes": changed_counts},
    )
