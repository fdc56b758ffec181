"""Sequential inference: fit each snapshot's space starting from the previous one."""
from __future__ import annotations

import logging
import warnings
from typing import Callable, Iterable

import numpy as np

from . import _kernels as K
from ._sweep import Sweeper, converged, ensure_finite
from .generators import make_rng
from .graph import GraphSnapshot
from .latent import (SolverConfig, Trajectory, lipschitz_constant, local_objective, random_space,
                     step_coefficient)

log = logging.getLogger(__name__)


def update_row_local(snap: GraphSnapshot, Z: np.ndarray, u: int, prev_row, alpha: float,
                     lam: float, gram: np.ndarray) -> np.ndarray:
    """Projected step for row ``u`` pulled only toward the previous snapshot's row."""
    k = Z.shape[1]
    temporal = np.zeros(k) if prev_row is None else np.array(prev_row, dtype=np.float64)
    out = np.empty(k)
    K.update_row_core(snap.indptr, snap.indices, snap.data, np.ascontiguousarray(Z, dtype=np.float64),
                      u, temporal, float(alpha), float(lam), np.ascontiguousarray(gram, dtype=np.float64), out)
    return out


def refine_full(snap: GraphSnapshot, Z: np.ndarray, Z_prev: np.ndarray | None, lam: float,
                cfg: SolverConfig, L: float, sweeper: Sweeper | None = None):
    """Sweep all rows of ``Z`` in place until the local objective settles.

    Returns ``(trace, sweeps, row_work)``.
    """
    sweeper = sweeper or Sweeper(snap, cfg.threads)
    obj = local_objective(snap, Z, Z_prev, lam)
    ensure_finite(obj, "local init")
    trace = [obj]
    work = 0
    sweeps = 0
    if snap.m == 0:
        warnings.warn("snapshot has no edges; running a single sweep", stacklevel=3)
    for r in range(cfg.max_iters):
        alpha = step_coefficient(r, L)
        work += sweeper(Z, K.gram_of(Z), Z_prev, None, alpha, lam)
        sweeps += 1
        new = local_objective(snap, Z, Z_prev, lam)
        ensure_finite(new, "local sweep", sweep=sweeps, trace=trace)
        trace.append(new)
        if snap.m == 0 or converged(obj, new, cfg.tol):
            break
        obj = new
    return trace, sweeps, work


def fit_first(snap: GraphSnapshot, cfg: SolverConfig, L: float, rng) -> tuple[np.ndarray, list, int, int]:
    """Random start fitted without a temporal term (there is no earlier space)."""
    Z = random_space(snap.n, cfg.k, rng)
    trace, sweeps, work = refine_full(snap, Z, None, 0.0, cfg, L)
    return Z, trace, sweeps, work


def fit_local(G: Iterable[GraphSnapshot], cfg: SolverConfig | None = None, keep_spaces: bool = True,
              sink: Callable[[int, np.ndarray], None] | None = None) -> Trajectory:
    """Fit ``Z_1..Z_t`` one snapshot at a time.

    ``G`` may be any iterable of snapshots (a generator reading from disk
    works), and is consumed one snapshot at a time.  With
    ``keep_spaces=False`` only the final space is kept in the returned
    trajectory; pass ``sink`` to receive each ``(tau, Z_tau)`` as it is
    finished.  Peak memory is then one snapshot plus two latent spaces.
    """
    cfg = cfg or SolverConfig()
    lam = cfg.lam_for("local")
    rng = make_rng(cfg.seed)
    it = iter(G)
    snap = next(it, None)
    if snap is None:
        raise ValueError("no snapshots to fit")
    n = snap.n
    L = lipschitz_constant(n, cfg.k)
    spaces, traces, iters = [], [], []
    work = 0
    Z_prev = None
    tau = 0
    while snap is not None:
        tau += 1
        if snap.n != n:
            raise ValueError("all snapshots must share the same node count")
        if Z_prev is None:
            Z, trace, sweeps, w = fit_first(snap, cfg, L, rng)
        else:
            Z = Z_prev.copy()
            trace, sweeps, w = refine_full(snap, Z, Z_prev, lam, cfg, L)
        log.debug("local tau=%d sweeps=%d objective %.6g", tau, sweeps, trace[-1])
        work += w
        traces.append(trace)
        iters.append(sweeps)
        if sink is not None:
            sink(tau, Z)
        if keep_spaces:
            spaces.append(Z)
        Z_prev = Z
        del snap
        snap = next(it, None)
    if not keep_spaces:
        spaces = [Z_prev]
    return Trajectory(
        spaces=spaces,
        objective_trace=[v for t in traces for v in t],
        iterations_used=iters,
        local_traces=traces,
        diagnostics={"algo": "local", "lambda": lam, "L": L, "row_work": work, "snapshots": tau},
    )
