"""Compiled per-row kernels shared by the three solvers.

Every kernel works on raw CSR arrays ``(indptr, indices, data)`` and a dense
``(n, k)`` latent matrix.  Nothing here allocates more than O(k^2) scratch
beyond its outputs, which is what keeps the sequential solver inside its
memory budget.
"""
from __future__ import annotations

import numpy as np
from numba import njit, prange

ZERO_NORM = 1e-12


@njit(cache=True)
def neighbour_sum(indptr, indices, data, Z, u, nb):
    """``nb = sum_v G(u, v) Z(v)`` over the neighbours of ``u``."""
    k = Z.shape[1]
    for c in range(k):
        nb[c] = 0.0
    for p in range(indptr[u], indptr[u + 1]):
        v = indices[p]
        w = data[p]
        for c in range(k):
            nb[c] += w * Z[v, c]


@njit(cache=True)
def step_row(Z, u, nb, temporal, alpha, lam, gram, out):
    """Projected accelerated step for row ``u`` given its neighbour sum (not normalized)."""
    k = Z.shape[1]
    for c in range(k):
        zg = 0.0
        for d in range(k):
            zg += Z[u, d] * gram[d, c]
        x = (1.0 + 2.0 * alpha) * Z[u, c] + alpha * lam * temporal[c] + 2.0 * alpha * nb[c] - 2.0 * alpha * zg
        # NaN must survive the projection so callers can detect it
        if x < 0.0:
            x = 0.0
        out[c] = x


@njit(cache=True)
def update_row_core(indptr, indices, data, Z, u, temporal, alpha, lam, gram, out):
    nb = np.empty(Z.shape[1])
    neighbour_sum(indptr, indices, data, Z, u, nb)
    step_row(Z, u, nb, temporal, alpha, lam, gram, out)
    return nb


@njit(cache=True)
def normalize_inplace(row):
    k = row.shape[0]
    s = 0.0
    for c in range(k):
        s += row[c] * row[c]
    norm = np.sqrt(s)
    if norm <= ZERO_NORM:
        fill = 1.0 / np.sqrt(k)
        for c in range(k):
            row[c] = fill
    else:
        for c in range(k):
            row[c] = row[c] / norm


@njit(cache=True)
def _row_delta(Z, u, old, new, nb, gram, temporal, lam):
    """Objective change (ordered-pair loss + smoothness) from replacing row u."""
    k = old.shape[0]
    lin_old = 0.0
    lin_new = 0.0
    q_old = 0.0
    q_new = 0.0
    t_diff = 0.0
    for c in range(k):
        lin_old += old[c] * nb[c]
        lin_new += new[c] * nb[c]
        t_diff += (old[c] - new[c]) * temporal[c]
        go = 0.0
        gn = 0.0
        for d in range(k):
            g = gram[c, d] - old[c] * old[d]
            go += g * old[d]
            gn += g * new[d]
        q_old += old[c] * go
        q_new += new[c] * gn
    return 2.0 * (q_new - 2.0 * lin_new - q_old + 2.0 * lin_old) + lam * t_diff


@njit(cache=True)
def _load_temporal(u, prev, has_prev, nxt, has_next, temporal):
    k = temporal.shape[0]
    for c in range(k):
        temporal[c] = 0.0
    if has_prev:
        for c in range(k):
            temporal[c] += prev[u, c]
    if has_next:
        for c in range(k):
            temporal[c] += nxt[u, c]


@njit(cache=True)
def _apply_row(Z, u, new, gram):
    k = new.shape[0]
    for c in range(k):
        oc = Z[u, c]
        for d in range(k):
            gram[c, d] = gram[c, d] - oc * Z[u, d] + new[c] * new[d]
    for c in range(k):
        Z[u, c] = new[c]


@njit(cache=True)
def _commit_row(Z, gram, u, nb, temporal, alpha, lam, new, old):
    """Step, normalize and write row ``u``; returns the objective change."""
    k = Z.shape[1]
    step_row(Z, u, nb, temporal, alpha, lam, gram, new)
    normalize_inplace(new)
    for c in range(k):
        old[c] = Z[u, c]
    d = _row_delta(Z, u, old, new, nb, gram, temporal, lam)
    _apply_row(Z, u, new, gram)
    return d


@njit(cache=True)
def sweep(indptr, indices, data, Z, gram, prev, has_prev, nxt, has_next, alpha, lam, order):
    """Gauss-Seidel pass over ``order``; updates ``Z`` and ``gram`` in place.

    Returns ``(row_work, objective_delta)`` where row_work counts touched
    rows (the node itself plus its neighbours) and objective_delta is the
    exact change of the snapshot loss plus smoothness terms.
    """
    k = Z.shape[1]
    new = np.empty(k)
    old = np.empty(k)
    nb = np.empty(k)
    temporal = np.empty(k)
    work = 0
    total = 0.0
    for i in range(order.shape[0]):
        u = order[i]
        _load_temporal(u, prev, has_prev, nxt, has_next, temporal)
        neighbour_sum(indptr, indices, data, Z, u, nb)
        total += _commit_row(Z, gram, u, nb, temporal, alpha, lam, new, old)
        work += 1 + indptr[u + 1] - indptr[u]
    return work, total


@njit(cache=True)
def independent_runs(indptr, indices, order, mark):
    """Cut ``order`` into maximal runs of consecutive, pairwise non-adjacent nodes.

    Returns run boundaries as offsets into ``order``; ``mark`` is all-False
    scratch of length n and is restored on exit.
    """
    m = order.shape[0]
    ptr = np.empty(m + 1, dtype=np.int64)
    ptr[0] = 0
    runs = 0
    start = 0
    for i in range(m):
        u = order[i]
        clash = False
        for p in range(indptr[u], indptr[u + 1]):
            if mark[indices[p]]:
                clash = True
                break
        if clash:
            for j in range(start, i):
                mark[order[j]] = False
            runs += 1
            ptr[runs] = i
            start = i
        mark[u] = True
    for j in range(start, m):
        mark[order[j]] = False
    if m > 0:
        runs += 1
        ptr[runs] = m
    return ptr[:runs + 1].copy()


@njit(parallel=True, cache=True)
def sweep_runs(indptr, indices, data, Z, gram, prev, has_prev, nxt, has_next, alpha, lam, order, run_ptr):
    """Same pass as :func:`sweep`, with neighbour sums of each run computed in parallel.

    Nodes of a run are not adjacent, so their neighbour sums do not depend
    on each other's updates; the O(k^2) steps and Gram updates then run in
    order.  The result is bitwise identical to :func:`sweep`.
    """
    k = Z.shape[1]
    new = np.empty(k)
    old = np.empty(k)
    temporal = np.empty(k)
    longest = 0
    for r in range(run_ptr.shape[0] - 1):
        longest = max(longest, run_ptr[r + 1] - run_ptr[r])
    buf = np.empty((longest, k))
    work = 0
    total = 0.0
    for r in range(run_ptr.shape[0] - 1):
        lo = run_ptr[r]
        hi = run_ptr[r + 1]
        for i in prange(hi - lo):
            neighbour_sum(indptr, indices, data, Z, order[lo + i], buf[i])
        for i in range(hi - lo):
            u = order[lo + i]
            _load_temporal(u, prev, has_prev, nxt, has_next, temporal)
            total += _commit_row(Z, gram, u, buf[i], temporal, alpha, lam, new, old)
            work += 1 + indptr[u + 1] - indptr[u]
    return work, total


@njit(cache=True)
def gram_of(Z):
    n, k = Z.shape
    g = np.zeros((k, k))
    for u in range(n):
        for c in range(k):
            zc = Z[u, c]
            for d in range(k):
                g[c, d] += zc * Z[u, d]
    return g


@njit(cache=True)
def snapshot_loss(indptr, indices, data, Z):
    """Off-diagonal squared Frobenius error ``||G - Z Z^T||^2`` without forming n x n."""
    n, k = Z.shape
    sq = 0.0
    cross = 0.0
    for u in range(n):
        for p in range(indptr[u], indptr[u + 1]):
            v = indices[p]
            w = data[p]
            s = 0.0
            for c in range(k):
                s += Z[u, c] * Z[v, c]
            sq += w * w
            cross += w * s
    g = gram_of(Z)
    fro = 0.0
    for c in range(k):
        for d in range(k):
            fro += g[c, d] * g[c, d]
    diag = 0.0
    for u in range(n):
        s = 0.0
        for c in range(k):
            s += Z[u, c] * Z[u, c]
        diag += s * s
    return sq - 2.0 * cross + (fro - diag)


@njit(cache=True)
def smoothness(Z, Zp):
    n, k = Z.shape
    total = 0.0
    for u in range(n):
        s = 0.0
        for c in range(k):
            s += Z[u, c] * Zp[u, c]
        total += 1.0 - s
    return total


@njit(cache=True)
def neighbour_average(indptr, indices, data, Z, nodes):
    """Weighted mean of neighbour rows, normalized, written back row by row."""
    k = Z.shape[1]
    row = np.empty(k)
    for i in range(nodes.shape[0]):
        u = nodes[i]
        lo = indptr[u]
        hi = indptr[u + 1]
        for c in range(k):
            row[c] = 0.0
        if hi > lo:
            wsum = 0.0
            for p in range(lo, hi):
                v = indices[p]
                w = data[p]
                wsum += w
                for c in range(k):
                    row[c] += w * Z[v, c]
            for c in range(k):
                row[c] = row[c] / wsum
        normalize_inplace(row)
        for c in range(k):
            Z[u, c] = row[c]


@njit(cache=True)
def refresh_affected(indptr, indices, Z, s_old, old_rows, delta, zeta, member, pos):
    """One pass of the affected-set update.

    ``old_rows[i]`` is the pre-iteration row of ``s_old[i]``.  ``member`` and
    ``pos`` are caller-owned scratch arrays of length n, all False / -1 on
    entry and restored on exit.
    """
    k = Z.shape[1]
    m = s_old.shape[0]
    for i in range(m):
        member[s_old[i]] = True
        pos[s_old[i]] = i
    added = np.empty(16, dtype=np.int64)
    n_added = 0
    for i in range(m):
        u = s_old[i]
        settled = True
        for c in range(k):
            if not (abs(Z[u, c] - old_rows[i, c]) < delta):
                settled = False
                break
        if settled:
            member[u] = False
        for p in range(indptr[u], indptr[u + 1]):
            w = indices[p]
            now = 0.0
            before = 0.0
            j = pos[w]
            for c in range(k):
                now += Z[u, c] * Z[w, c]
                before += old_rows[i, c] * (old_rows[j, c] if j >= 0 else Z[w, c])
            if abs(now - before) >= zeta and not member[w]:
                member[w] = True
                if j < 0:
                    if n_added == added.shape[0]:
                        grown = np.empty(2 * n_added, dtype=np.int64)
                        grown[:n_added] = added
                        added = grown
                    added[n_added] = w
                    n_added += 1
    count = 0
    for i in range(m):
        if member[s_old[i]]:
            count += 1
    for i in range(n_added):
        if member[added[i]]:
            count += 1
    out = np.empty(count, dtype=np.int64)
    j = 0
    for i in range(m):
        u = s_old[i]
        if member[u]:
            out[j] = u
            j += 1
        member[u] = False
        pos[u] = -1
    for i in range(n_added):
        w = added[i]
        if member[w]:
            out[j] = w
            j += 1
        member[w] = False
    out.sort()
    return out


@njit(cache=True)
def closed_neighbourhood_size(indptr, indices, nodes, mark):
    """|S ∪ N(S)| and sum of degrees over S; ``mark`` is all-False scratch."""
    size = 0
    deg = 0
    for i in range(nodes.shape[0]):
        u = nodes[i]
        if not mark[u]:
            mark[u] = True
            size += 1
        deg += indptr[u + 1] - indptr[u]
        for p in range(indptr[u], indptr[u + 1]):
            w = indices[p]
            if not mark[w]:
                mark[w] = True
                size += 1
    for i in range(nodes.shape[0]):
        u = nodes[i]
        mark[u] = False
        for p in range(indptr[u], indptr[u + 1]):
            mark[indices[p]] = False
    return size, deg
