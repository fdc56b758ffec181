"""Joint inference of every latent space with cyclic block-coordinate sweeps."""
from __future__ import annotations

import logging
import warnings

import numpy as np

from . import _kernels as K
from ._sweep import Sweeper, converged, ensure_finite
from .generators import make_rng
from .graph import DynamicGraph, GraphSnapshot
from .latent import (SolverConfig, Trajectory, lipschitz_constant, objective, random_space,
                     step_coefficient)

log = logging.getLogger(__name__)


def update_row_global(snap: GraphSnapshot, Z: np.ndarray, u: int, prev_row, next_row,
                      alpha: float, lam: float, gram: np.ndarray) -> np.ndarray:
    """One projected step for row ``u`` using both temporal neighbours.

    Missing ``prev_row``/``next_row`` (first or last snapshot) contribute
    nothing.  The result is not normalized.
    """
    k = Z.shape[1]
    temporal = np.zeros(k)
    if prev_row is not None:
        temporal = temporal + prev_row
    if next_row is not None:
        temporal = temporal + next_row
    out = np.empty(k)
    K.update_row_core(snap.indptr, snap.indices, snap.data, np.ascontiguousarray(Z, dtype=np.float64),
                      u, temporal, float(alpha), float(lam), np.ascontiguousarray(gram, dtype=np.float64), out)
    return out


def fit_global(G: DynamicGraph, cfg: SolverConfig | None = None) -> Trajectory:
    """Fit ``Z_1..Z_t`` jointly.

    Each sweep visits snapshots in order and nodes in ascending order,
    updating rows in place (the Gram matrix is refreshed at the start of each
    snapshot and row-swapped after every update).  The step coefficient
    advances once per full sweep.  Stops when the relative change of the
    objective drops below ``cfg.tol`` or after ``cfg.max_iters`` sweeps.
    """
    cfg = cfg or SolverConfig()
    n, T, k = G.n, G.T, cfg.k
    lam = cfg.lam_for("global")
    L = lipschitz_constant(n, k)
    rng = make_rng(cfg.seed)
    spaces = [random_space(n, k, rng) for _ in range(T)]
    sweepers = [Sweeper(s, cfg.threads) for s in G]
    empty = all(s.m == 0 for s in G)
    if empty:
        warnings.warn("all snapshots are empty; returning after a single sweep", stacklevel=2)

    obj = objective(G, spaces, lam)
    ensure_finite(obj, "fit_global init")
    trace = [obj]
    work = 0
    sweeps = 0
    for r in range(cfg.max_iters):
        alpha = step_coefficient(r, L)
        for tau in range(T):
            Z = spaces[tau]
            prev = spaces[tau - 1] if tau > 0 else None
            nxt = spaces[tau + 1] if tau < T - 1 else None
            work += sweepers[tau](Z, K.gram_of(Z), prev, nxt, alpha, lam)
        sweeps += 1
        new = objective(G, spaces, lam)
        ensure_finite(new, "fit_global", sweep=sweeps, trace=trace)
        trace.append(new)
        log.debug("global sweep %d objective %.6g", sweeps, new)
        if empty or converged(obj, new, cfg.tol):
            break
        obj = new
    return Trajectory(
        spaces=spaces,
        objective_trace=trace,
        iterations_used=[sweeps] * T,
        diagnostics={"algo": "global", "lambda": lam, "L": L, "row_work": work, "sweeps": sweeps},
    )
