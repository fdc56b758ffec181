"""Synthetic dynamic graphs with planted communities."""
from __future__ import annotations

import numpy as np

from .graph import DynamicGraph, GraphSnapshot, TemporalEdgeList


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator so streams do not depend on thread layout."""
    return np.random.Generator(np.random.Philox(seed))


def _bernoulli_subset(rng: np.random.Generator, size: int, p: float) -> np.ndarray:
    """Sorted indices in ``[0, size)``, each kept independently with probability ``p``."""
    if size <= 0 or p <= 0:
        return np.empty(0, dtype=np.int64)
    if p >= 1:
        return np.arange(size, dtype=np.int64)
    count = int(rng.binomial(size, p))
    if count > size // 2:
        keep = np.ones(size, dtype=bool)
        keep[_distinct(rng, size, size - count)] = False
        return np.flatnonzero(keep)
    return np.sort(_distinct(rng, size, count))


def _distinct(rng: np.random.Generator, size: int, count: int) -> np.ndarray:
    # draw-and-top-up; count <= size/2 keeps the expected number of rounds small
    picked = np.empty(0, dtype=np.int64)
    while len(picked) < count:
        extra = rng.integers(0, size, size=count - len(picked) + 16, dtype=np.int64)
        picked = np.unique(np.concatenate([picked, extra]))
    return rng.permutation(picked)[:count]


def _triu_pairs(idx: np.ndarray, s: int) -> tuple[np.ndarray, np.ndarray]:
    """Map linear indices of the strict upper triangle of an s x s matrix to (i, j)."""
    # row i starts at offset i*s - i*(i+1)/2
    i = np.floor((2 * s - 1 - np.sqrt((2 * s - 1) ** 2 - 8.0 * idx)) / 2).astype(np.int64)
    start = i * s - i * (i + 1) // 2
    # guard against floating point at row boundaries
    over = start > idx
    i[over] -= 1
    start = i * s - i * (i + 1) // 2
    nxt = (i + 1) * s - (i + 1) * (i + 2) // 2
    under = idx >= nxt
    i[under] += 1
    start = i * s - i * (i + 1) // 2
    j = idx - start + i + 1
    return i, j


def _sample_block_pair(rng, members_a, members_b, p, same):
    if same:
        s = len(members_a)
        idx = _bernoulli_subset(rng, s * (s - 1) // 2, p)
        i, j = _triu_pairs(idx, s)
        return members_a[i], members_a[j]
    idx = _bernoulli_subset(rng, len(members_a) * len(members_b), p)
    return members_a[idx // len(members_b)], members_b[idx % len(members_b)]


def _sample_sbm(rng, membership, blocks, p_in, p_out):
    groups = [np.flatnonzero(membership == b) for b in range(blocks)]
    us, vs = [], []
    for a in range(blocks):
        for b in range(a, blocks):
            u, v = _sample_block_pair(rng, groups[a], groups[b], p_in if a == b else p_out, a == b)
            us.append(u)
            vs.append(v)
    return np.concatenate(us), np.concatenate(vs)


def planted_partition_generate(n: int, blocks: int, p_in: float, p_out: float,
                               drift_fraction: float = 0.0, T: int = 1,
                               seed: int = 0, return_membership: bool = False,
                               resample_all: bool = False):
    """Planted-partition stream with community drift.

    Snapshot 1 assigns node ``u`` to block ``u * blocks // n`` and samples
    every pair independently (``p_in`` inside a block, ``p_out`` across).
    Each later snapshot moves ``round(drift_fraction * n)`` random nodes to
    uniformly random blocks and resamples all edges incident to them; the
    remaining edges carry over unchanged.  With ``resample_all`` every
    snapshot is instead a fresh sample from the current memberships.
    """
    if blocks < 1 or blocks > n:
        raise ValueError(f"need 1 <= blocks <= n, got blocks={blocks}, n={n}")
    if not 0 <= p_out < p_in <= 1:
        raise ValueError("need 0 <= p_out < p_in <= 1")
    if not 0 <= drift_fraction <= 1:
        raise ValueError("drift_fraction must lie in [0, 1]")
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = make_rng(seed)
    membership = (np.arange(n) * blocks) // n
    u, v = _sample_sbm(rng, membership, blocks, p_in, p_out)
    snaps = [GraphSnapshot.from_edges(n, u, v, binarize=True)]
    history = [membership.copy()]
    n_move = int(round(drift_fraction * n))
    for _ in range(1, T):
        membership = membership.copy()
        if n_move:
            moved = np.sort(rng.choice(n, size=n_move, replace=False))
            membership[moved] = rng.integers(0, blocks, size=n_move)
        if resample_all:
            u, v = _sample_sbm(rng, membership, blocks, p_in, p_out)
        elif n_move:
            is_moved = np.zeros(n, dtype=bool)
            is_moved[moved] = True
            keep = ~(is_moved[u] | is_moved[v])
            nu, nv = [u[keep]], [v[keep]]
            groups = [np.flatnonzero(membership == b) for b in range(blocks)]
            for x in moved:
                for b, group in enumerate(groups):
                    p = p_in if b == membership[x] else p_out
                    y = group[_bernoulli_subset(rng, len(group), p)]
                    # pairs (x, y) with y unmoved, or y moved and y > x, so each pair is drawn once
                    y = y[~(is_moved[y] & (y <= x))]
                    nu.append(np.full(len(y), x, dtype=np.int64))
                    nv.append(y)
            u, v = np.concatenate(nu), np.concatenate(nv)
        snaps.append(GraphSnapshot.from_edges(n, u, v, binarize=True))
        history.append(membership.copy())
    graph = DynamicGraph(tuple(snaps))
    if return_membership:
        return graph, history
    return graph


def to_temporal_edges(graph: DynamicGraph) -> TemporalEdgeList:
    """Flatten a dynamic graph into records stamped ``tau - 0.5`` for snapshot ``tau``.

    Slicing the result into ``graph.T`` equal intervals over ``[0, T]``
    recovers the snapshots.
    """
    us, vs, ts, ws = [], [], [], []
    for tau, snap in enumerate(graph, start=1):
        a, b, w = snap.edges()
        us.append(a)
        vs.append(b)
        ws.append(w)
        ts.append(np.full(len(a), tau - 0.5))
    return TemporalEdgeList.from_arrays(np.concatenate(us), np.concatenate(vs),
                                        np.concatenate(ts), np.concatenate(ws),
                                        node_count=graph.n)
