from __future__ import annotations

import math
import os

import numba
import numpy as np

from . import _kernels as K
from .graph import GraphSnapshot
from .latent import NumericalError

if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

_EMPTY = np.zeros((0, 0))


def set_threads(threads: int) -> None:
    numba.set_num_threads(max(1, min(threads, numba.config.NUMBA_NUM_THREADS)))


def run_sweep(snap: GraphSnapshot, Z, gram, prev, nxt, alpha, lam, order, threads: int = 1,
              run_ptr=None) -> tuple[int, float]:
    """One pass of row updates over ``order``; returns ``(row_work, objective_delta)``.

    ``threads > 1`` splits the pass into runs of non-adjacent nodes whose
    neighbour sums are computed in parallel; the outcome is bitwise the same.
    """
    has_prev = prev is not None
    has_next = nxt is not None
    prev = _EMPTY if prev is None else prev
    nxt = _EMPTY if nxt is None else nxt
    if threads > 1:
        set_threads(threads)
        if run_ptr is None:
            run_ptr = K.independent_runs(snap.indptr, snap.indices, order, np.zeros(snap.n, dtype=np.bool_))
        return K.sweep_runs(snap.indptr, snap.indices, snap.data, Z, gram, prev, has_prev, nxt, has_next,
                            alpha, lam, order, run_ptr)
    return K.sweep(snap.indptr, snap.indices, snap.data, Z, gram, prev, has_prev, nxt, has_next,
                   alpha, lam, order)


class Sweeper:
    """Full pass over all nodes of a snapshot in ascending order.

    The run split used by the threaded path depends only on the graph, so it
    is computed once here.
    """

    def __init__(self, snap: GraphSnapshot, threads: int = 1):
        self.snap = snap
        self.threads = threads
        self.order = np.arange(snap.n, dtype=np.int64)
        self.run_ptr = None
        if threads > 1:
            self.run_ptr = K.independent_runs(snap.indptr, snap.indices, self.order,
                                              np.zeros(snap.n, dtype=np.bool_))

    def __call__(self, Z, gram, prev, nxt, alpha, lam) -> int:
        work, _ = run_sweep(self.snap, Z, gram, prev, nxt, alpha, lam, self.order, self.threads, self.run_ptr)
        return work


def converged(old: float, new: float, tol: float) -> bool:
    return abs(old - new) <= tol * max(abs(old), 1e-300)


def ensure_finite(value: float, where: str, **state) -> None:
    if not math.isfinite(value):
        raise NumericalError(f"non-finite objective {value} in {where}", {"where": where, **state})
