"""Temporal edge lists, graph snapshots and snapshot deltas.

All adjacency is kept as symmetric CSR (``scipy.sparse.csr_matrix``) with
sorted column indices, no diagonal and strictly positive weights.  Snapshots
share one node universe so every latent space in a trajectory has the same
number of rows.
"""
from __future__ import annotations

import io
import logging
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)


class EdgeListError(ValueError):
    """Malformed edge-list input; carries the offending line number."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class TemporalEdgeList:
    """Parsed interaction records with dense 0-based node ids.

    ``node_ids[i]`` is the external identifier of internal node ``i``.
    """

    u: np.ndarray
    v: np.ndarray
    t: np.ndarray
    w: np.ndarray
    node_count: int
    node_ids: tuple[str, ...] = ()
    rejected_self_loops: int = 0

    def __len__(self) -> int:
        return len(self.u)

    def __post_init__(self):
        if np.any(self.u == self.v):
            raise ValueError("self-loops are not allowed in a TemporalEdgeList")
        if len(self.u) and (min(self.u.min(), self.v.min()) < 0
                            or max(self.u.max(), self.v.max()) >= self.node_count):
            raise ValueError("node ids must lie in [0, node_count)")

    @classmethod
    def from_arrays(cls, u, v, t, w=None, node_count=None) -> "TemporalEdgeList":
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        t = np.asarray(t, dtype=np.float64)
        w = np.ones(len(u)) if w is None else np.asarray(w, dtype=np.float64)
        if node_count is None:
            node_count = int(max(u.max(), v.max())) + 1 if len(u) else 0
        ids = tuple(str(i) for i in range(node_count))
        return cls(u, v, t, w, int(node_count), ids)


def _open_text(source) -> tuple[IO[str], bool]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8"), True
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("utf-8")), True
    if isinstance(source, io.TextIOBase):
        return source, False
    # binary stream
    return io.TextIOWrapper(source, encoding="utf-8"), False


def load_temporal_edges(source, comment: str = "#") -> TemporalEdgeList:
    """Parse whitespace-separated ``u v t [w]`` records.

    ``source`` is a path, a bytes blob or an open (text or binary) stream.
    External node ids are arbitrary tokens and are remapped to dense integers
    in order of first appearance.  Self-loops are dropped and counted;
    duplicate records are kept.
    """
    fh, owned = _open_text(source)
    index: dict[str, int] = {}
    us, vs, ts, ws = [], [], [], []
    dropped = 0
    try:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith(comment):
                continue
            parts = line.split()
            if len(parts) not in (3, 4):
                raise EdgeListError(f"expected 'u v t [w]', got {len(parts)} fields", lineno)
            try:
                t = float(parts[2])
                w = float(parts[3]) if len(parts) == 4 else 1.0
            except ValueError:
                raise EdgeListError(f"non-numeric timestamp or weight in {line!r}", lineno) from None
            if not (math.isfinite(t) and math.isfinite(w)) or w <= 0:
                raise EdgeListError("timestamps must be finite and weights positive", lineno)
            a, b = parts[0], parts[1]
            if a == b:
                dropped += 1
                continue
            us.append(index.setdefault(a, len(index)))
            vs.append(index.setdefault(b, len(index)))
            ts.append(t)
            ws.append(w)
    finally:
        if owned:
            fh.close()
    if dropped:
        warnings.warn(f"dropped {dropped} self-loop record(s)", stacklevel=2)
    return TemporalEdgeList(
        np.asarray(us, dtype=np.int64),
        np.asarray(vs, dtype=np.int64),
        np.asarray(ts, dtype=np.float64),
        np.asarray(ws, dtype=np.float64),
        len(index),
        tuple(index),
        dropped,
    )


def write_temporal_edges(fh: IO[str], edges: TemporalEdgeList) -> None:
    for a, b, t, w in zip(edges.u.tolist(), edges.v.tolist(), edges.t.tolist(), edges.w.tolist()):
        fh.write(f"{a} {b} {t!r} {w!r}\n")


def write_node_map(fh: IO[str], node_ids: Sequence[str]) -> None:
    for i, ext in enumerate(node_ids):
        fh.write(f"{ext} {i}\n")


def read_node_map(fh: IO[str]) -> list[str]:
    pairs = [line.split() for line in fh if line.strip() and not line.startswith("#")]
    ids = [""] * len(pairs)
    for ext, i in pairs:
        ids[int(i)] = ext
    return ids


class GraphSnapshot:
    """Symmetric weighted adjacency of one time slice.

    Construct through :meth:`from_edges` or :meth:`from_csr`; the underlying
    CSR arrays are frozen so a snapshot can be shared freely.
    """

    __slots__ = ("adjacency",)

    def __init__(self, adjacency: sp.csr_matrix):
        adjacency = sp.csr_matrix(adjacency, dtype=np.float64)
        adjacency.sum_duplicates()
        adjacency.sort_indices()
        adjacency.eliminate_zeros()
        n = adjacency.shape[0]
        if adjacency.shape != (n, n):
            raise ValueError("adjacency must be square")
        if adjacency.diagonal().any():
            raise ValueError("snapshot adjacency may not have diagonal entries")
        if adjacency.nnz and adjacency.data.min() <= 0:
            raise ValueError("snapshot weights must be positive")
        if (adjacency != adjacency.T).nnz:
            raise ValueError("snapshot adjacency must be symmetric")
        adjacency.indices = adjacency.indices.astype(np.int64, copy=False)
        adjacency.indptr = adjacency.indptr.astype(np.int64, copy=False)
        for arr in (adjacency.data, adjacency.indices, adjacency.indptr):
            arr.flags.writeable = False
        self.adjacency = adjacency

    @classmethod
    def from_edges(cls, n: int, u, v, w=None, binarize: bool = False) -> "GraphSnapshot":
        """Build from undirected edge records; repeated pairs sum their weights."""
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        w = np.ones(len(u)) if w is None else np.asarray(w, dtype=np.float64)
        if np.any(u == v):
            raise ValueError("self-loops are not allowed")
        # sum in the upper triangle only, then mirror, so both halves are bitwise equal
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        upper = sp.coo_matrix((w, (lo, hi)), shape=(n, n)).tocsr()
        upper.sum_duplicates()
        if binarize:
            upper.data[:] = 1.0
        return cls(upper + upper.T)

    @classmethod
    def empty(cls, n: int) -> "GraphSnapshot":
        return cls(sp.csr_matrix((n, n)))

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def m(self) -> int:
        """Number of distinct undirected edges."""
        return self.adjacency.nnz // 2

    @property
    def indptr(self) -> np.ndarray:
        return self.adjacency.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.adjacency.indices

    @property
    def data(self) -> np.ndarray:
        return self.adjacency.data

    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    def neighbors(self, u: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[u], self.indptr[u + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def weight(self, u: int, v: int) -> float:
        nbrs, wts = self.neighbors(u)
        i = np.searchsorted(nbrs, v)
        if i < len(nbrs) and nbrs[i] == v:
            return float(wts[i])
        return 0.0

    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Upper-triangle edge arrays ``(u, v, w)`` with ``u < v``, row-major order."""
        coo = sp.triu(self.adjacency, k=1, format="coo")
        order = np.lexsort((coo.col, coo.row))
        return (coo.row[order].astype(np.int64), coo.col[order].astype(np.int64),
                coo.data[order])

    def nbytes(self) -> int:
        a = self.adjacency
        return a.data.nbytes + a.indices.nbytes + a.indptr.nbytes

    def __eq__(self, other) -> bool:
        if not isinstance(other, GraphSnapshot):
            return NotImplemented
        a, b = self.adjacency, other.adjacency
        return (a.shape == b.shape and np.array_equal(a.indptr, b.indptr)
                and np.array_equal(a.indices, b.indices) and np.array_equal(a.data, b.data))

    def __repr__(self) -> str:
        return f"GraphSnapshot(n={self.n}, m={self.m})"


def write_snapshot(fh: IO[str], snap: GraphSnapshot, tau: int) -> None:
    fh.write(f"# snapshot {tau} {snap.n} {snap.m}\n")
    for a, b, w in zip(*(x.tolist() for x in snap.edges())):
        fh.write(f"{a} {b} {w!r}\n")


def read_snapshot(source) -> tuple[GraphSnapshot, int]:
    """Read a file written by :func:`write_snapshot`; returns ``(snapshot, tau)``."""
    fh, owned = _open_text(source)
    try:
        header = fh.readline().split()
        if len(header) != 5 or header[:2] != ["#", "snapshot"]:
            raise EdgeListError("missing '# snapshot tau n m' header", 1)
        tau, n, m = (int(x) for x in header[2:])
        us, vs, ws = [], [], []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split()
            try:
                us.append(int(parts[0]))
                vs.append(int(parts[1]))
                ws.append(float(parts[2]) if len(parts) > 2 else 1.0)
            except (ValueError, IndexError):
                raise EdgeListError(f"malformed snapshot record {line.strip()!r}", lineno) from None
    finally:
        if owned:
            fh.close()
    snap = GraphSnapshot.from_edges(n, us, vs, ws)
    if snap.m != m:
        raise EdgeListError(f"header declares {m} edges, found {snap.m}")
    return snap, tau


@dataclass(frozen=True)
class DynamicGraph:
    snapshots: tuple[GraphSnapshot, ...]

    def __post_init__(self):
        object.__setattr__(self, "snapshots", tuple(self.snapshots))
        if not self.snapshots:
            raise ValueError("a dynamic graph needs at least one snapshot")
        n = self.snapshots[0].n
        if any(s.n != n for s in self.snapshots):
            raise ValueError("all snapshots must share the same node count")

    @property
    def T(self) -> int:
        return len(self.snapshots)

    @property
    def n(self) -> int:
        return self.snapshots[0].n

    def __len__(self) -> int:
        return len(self.snapshots)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return DynamicGraph(self.snapshots[i])
        return self.snapshots[i]

    def __iter__(self) -> Iterator[GraphSnapshot]:
        return iter(self.snapshots)


def slice_snapshots(
    edges: TemporalEdgeList,
    T: int | None = None,
    boundaries: Sequence[float] | None = None,
    start: float | None = None,
    end: float | None = None,
    binarize: bool = False,
) -> DynamicGraph:
    """Cut interaction records into snapshots.

    Either ``T`` equal intervals over ``[start, end]`` (defaulting to the
    observed timestamp range) or explicit cut points ``b_0 < ... < b_T``.
    Snapshot ``i`` collects records with ``b_{i-1} < t <= b_i``; the first
    interval is also closed on the left.  Records outside ``[b_0, b_T]`` are
    dropped with a warning.
    """
    if (T is None) == (boundaries is None):
        raise ValueError("give exactly one of T or boundaries")
    if boundaries is None:
        if T < 1:
            raise ValueError("T must be >= 1")
        has = len(edges) > 0
        lo = float(start) if start is not None else (float(edges.t.min()) if has else 0.0)
        hi = float(end) if end is not None else (float(edges.t.max()) if has else lo)
        if hi < lo:
            raise ValueError("end must not precede start")
        b = np.linspace(lo, hi, T + 1)
    else:
        b = np.asarray(boundaries, dtype=np.float64)
        if len(b) < 2 or np.any(np.diff(b) <= 0):
            raise ValueError("boundaries must be at least two strictly increasing cut points")
        T = len(b) - 1

    inside = (edges.t >= b[0]) & (edges.t <= b[-1])
    if not inside.all():
        warnings.warn(f"{int((~inside).sum())} record(s) fall outside [{b[0]}, {b[-1]}] and were dropped",
                      stacklevel=2)
    slot = np.maximum(np.searchsorted(b, edges.t, side="left"), 1) - 1

    snaps = []
    for i in range(T):
        sel = inside & (slot == i)
        snaps.append(GraphSnapshot.from_edges(edges.node_count, edges.u[sel], edges.v[sel],
                                              edges.w[sel], binarize=binarize))
    n_empty = sum(s.m == 0 for s in snaps)
    if n_empty:
        warnings.warn(f"{n_empty} of {T} snapshot(s) are empty", stacklevel=2)
    return DynamicGraph(tuple(snaps))


@dataclass(frozen=True)
class DeltaGraph:
    """Change set between two snapshots over the same node universe.

    Edge arrays hold upper-triangle pairs (``u < v``) as ``(E, 2)`` integer
    arrays; ``added_weights`` and ``changed_weights`` carry the new weights so
    the delta can be replayed onto the earlier snapshot.
    """

    n: int
    added_edges: np.ndarray
    added_weights: np.ndarray
    removed_edges: np.ndarray
    weight_changed_edges: np.ndarray
    changed_weights: np.ndarray
    changed_nodes: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.changed_nodes is None:
            ends = np.concatenate([self.added_edges.ravel(), self.removed_edges.ravel(),
                                   self.weight_changed_edges.ravel()])
            object.__setattr__(self, "changed_nodes", np.unique(ends).astype(np.int64))

    @property
    def is_empty(self) -> bool:
        return len(self.changed_nodes) == 0

    def __len__(self) -> int:
        return len(self.added_edges) + len(self.removed_edges) + len(self.weight_changed_edges)


def _edge_keys(snap: GraphSnapshot) -> tuple[np.ndarray, np.ndarray]:
    u, v, w = snap.edges()
    return u * snap.n + v, w


def _unkey(keys: np.ndarray, n: int) -> np.ndarray:
    return np.stack([keys // n, keys % n], axis=1).astype(np.int64).reshape(-1, 2)


def diff_snapshots(prev: GraphSnapshot, next: GraphSnapshot) -> DeltaGraph:
    """Classify the edge-level changes from ``prev`` to ``next``.

    Node insertion and removal show up as rows going from empty to non-empty
    (or back), so they need no special case.
    """
    if prev.n != next.n:
        raise ValueError(f"snapshots disagree on node count ({prev.n} vs {next.n})")
    n = prev.n
    kp, wp = _edge_keys(prev)
    kn, wn = _edge_keys(next)
    common, ip, inx = np.intersect1d(kp, kn, assume_unique=True, return_indices=True)
    diff = wp[ip] != wn[inx]
    added_mask = ~np.isin(kn, common, assume_unique=True)
    removed = np.setdiff1d(kp, common, assume_unique=True)
    return DeltaGraph(
        n=n,
        added_edges=_unkey(kn[added_mask], n),
        added_weights=wn[added_mask],
        removed_edges=_unkey(removed, n),
        weight_changed_edges=_unkey(common[diff], n),
        changed_weights=wn[inx][diff],
    )


def apply_delta(prev: GraphSnapshot, delta: DeltaGraph) -> GraphSnapshot:
    """Replay ``delta`` onto ``prev``; inverse of :func:`diff_snapshots`."""
    if prev.n != delta.n:
        raise ValueError("delta and snapshot disagree on node count")
    n = prev.n
    keys, w = _edge_keys(prev)
    weights = dict(zip(keys.tolist(), w.tolist()))
    for (a, b) in delta.removed_edges:
        del weights[a * n + b]
    for (a, b), x in zip(delta.weight_changed_edges, delta.changed_weights):
        weights[a * n + b] = x
    for (a, b), x in zip(delta.added_edges, delta.added_weights):
        weights[a * n + b] = x
    k = np.fromiter(weights.keys(), dtype=np.int64, count=len(weights))
    x = np.fromiter(weights.values(), dtype=np.float64, count=len(weights))
    return GraphSnapshot.from_edges(n, k // n, k % n, x)


def aggregate(snapshots: Iterable[GraphSnapshot]) -> GraphSnapshot:
    """Binary union of snapshots (an edge exists if it appears in any of them)."""
    snapshots = list(snapshots)
    total = snapshots[0].adjacency.copy()
    for s in snapshots[1:]:
        total = total + s.adjacency
    total = sp.csr_matrix(total)
    total.data[:] = 1.0
    return GraphSnapshot(total)
