"""Link scoring, test-pair sampling and ranking metrics."""
from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .generators import make_rng
from .graph import DynamicGraph, GraphSnapshot, aggregate, diff_snapshots
from .latent import Trajectory, snapshot_loss

LINKED, NON_LINKED = 1, 0

# enumerate the complement explicitly below this many node pairs, else rejection-sample
_ENUMERATE_LIMIT = 4_000_000


# --- scores ---------------------------------------------------------------

def score_pair(Z: np.ndarray, u: int, v: int) -> float:
    if u == v:
        raise ValueError("diagonal pairs are not scored")
    return float(Z[u] @ Z[v])


def score_pairs(Z: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if np.any(pairs[:, 0] == pairs[:, 1]):
        raise ValueError("diagonal pairs are not scored")
    return np.einsum("ij,ij->i", Z[pairs[:, 0]], Z[pairs[:, 1]])


def adamic_adar(G_agg: GraphSnapshot, u: int, v: int) -> float:
    """Sum of ``1 / ln d(w)`` over common neighbours; degree-1 neighbours add nothing."""
    nu, _ = G_agg.neighbors(u)
    nv, _ = G_agg.neighbors(v)
    common = np.intersect1d(nu, nv, assume_unique=True)
    if not len(common):
        return 0.0
    deg = np.diff(G_agg.indptr)[common]
    deg = deg[deg > 1]
    return float(np.sum(1.0 / np.log(deg)))


def adamic_adar_pairs(G_agg: GraphSnapshot, pairs: np.ndarray) -> np.ndarray:
    return np.array([adamic_adar(G_agg, int(a), int(b)) for a, b in pairs], dtype=np.float64)


def previous_graph_baseline(G_t: GraphSnapshot, u: int, v: int, weighted: bool = False) -> float:
    w = G_t.weight(u, v)
    if weighted:
        return w
    return 1.0 if w > 0 else 0.0


def previous_graph_pairs(G_t: GraphSnapshot, pairs: np.ndarray, weighted: bool = False) -> np.ndarray:
    return np.array([previous_graph_baseline(G_t, int(a), int(b), weighted) for a, b in pairs])


# --- metrics ----------------------------------------------------------------

def _check_binary(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    if labels.all() or not labels.any():
        raise ValueError("need at least one positive and one negative label")
    return scores, labels


def auc_roc(scores, labels) -> float:
    """Mann-Whitney rank statistic; tied scores count one half."""
    scores, labels = _check_binary(scores, labels)
    ranks = rankdata(scores)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    u_stat = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_stat / (n_pos * n_neg))


def pr_curve(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """Precision and recall at every distinct score threshold, starting at (recall 0, precision 1)."""
    scores, labels = _check_binary(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    last = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tp, fp = tp[last], fp[last]
    precision = np.r_[1.0, tp / (tp + fp)]
    recall = np.r_[0.0, tp / tp[-1]]
    return precision, recall


def auc_pr(scores, labels) -> float:
    precision, recall = pr_curve(scores, labels)
    return float(np.trapezoid(precision, recall))


def prediction_error(G: DynamicGraph, traj) -> float:
    """Mean Frobenius distance between each snapshot and the previous space's reconstruction."""
    spaces = traj.spaces if isinstance(traj, Trajectory) else traj
    if G.T < 2:
        raise ValueError("prediction error needs at least two snapshots")
    if len(spaces) != G.T:
        raise ValueError(f"trajectory has {len(spaces)} spaces for {G.T} snapshots")
    total = 0.0
    for tau in range(1, G.T):
        total += math.sqrt(max(snapshot_loss(G[tau], spaces[tau - 1]), 0.0))
    return total / (G.T - 1)


# --- test pairs -------------------------------------------------------------

@dataclass(frozen=True)
class TestPairSet:
    """Balanced set of scored node pairs; ``pairs`` has ``u < v``."""

    pairs: np.ndarray
    labels: np.ndarray
    mode: str
    seed: int
    composition: dict = field(default_factory=dict)
    available: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    def __len__(self) -> int:
        return len(self.labels)

    def write(self, fh) -> None:
        for (a, b), y in zip(self.pairs, self.labels):
            fh.write(f"{a} {b} {int(y)}\n")

    @classmethod
    def read(cls, fh, mode: str = "all", seed: int = -1) -> "TestPairSet":
        rows = np.loadtxt(fh, dtype=np.int64, ndmin=2)
        return cls(rows[:, :2], rows[:, 2], mode, seed)


def _keys(snap: GraphSnapshot) -> np.ndarray:
    u, v, _ = snap.edges()
    return u * snap.n + v


def _choose(rng, keys: np.ndarray, count: int) -> np.ndarray:
    if count >= len(keys):
        return rng.permutation(keys)
    return keys[rng.choice(len(keys), size=count, replace=False)]


def _sample_absent(rng, n: int, excluded: np.ndarray, count: int) -> np.ndarray:
    """Uniform distinct upper-triangle pair keys not in ``excluded`` (sorted)."""
    total = n * (n - 1) // 2
    if count <= 0:
        return np.empty(0, dtype=np.int64)
    if total <= _ENUMERATE_LIMIT:
        iu, ju = np.triu_indices(n, 1)
        cand = iu.astype(np.int64) * n + ju
        cand = cand[~np.isin(cand, excluded, assume_unique=True)]
        return _choose(rng, cand, count)
    picked = np.empty(0, dtype=np.int64)
    while len(picked) < count:
        batch = 2 * (count - len(picked)) + 64
        a = rng.integers(0, n, size=batch)
        b = rng.integers(0, n, size=batch)
        ok = a != b
        lo, hi = np.minimum(a, b)[ok], np.maximum(a, b)[ok]
        keys = lo * n + hi
        keys = keys[~np.isin(keys, excluded)]
        keys = keys[~np.isin(keys, picked)]
        _, first = np.unique(keys, return_index=True)
        picked = np.concatenate([picked, keys[np.sort(first)]])
    return picked[:count]


def _to_pairs(keys: np.ndarray, n: int) -> np.ndarray:
    return np.stack([keys // n, keys % n], axis=1).astype(np.int64).reshape(-1, 2)


def sample_test_pairs(G_next: GraphSnapshot, count_per_class: int = 100_000, mode: str = "all",
                      seed: int = 0, G_prev: GraphSnapshot | None = None,
                      history: Iterable[GraphSnapshot] = (), exclude_historical: bool = False) -> TestPairSet:
    """Draw balanced linked / non-linked pairs for the snapshot being predicted.

    ``mode="all"``: linked pairs are edges of ``G_next``; non-linked pairs come
    from its complement (minus every edge in ``history`` when
    ``exclude_historical``).

    ``mode="new"``: linked pairs are edges added since ``G_prev``; non-linked
    pairs are deleted edges, topped up with pairs linked in neither
    ``G_prev``, ``G_next`` nor ``history`` until the classes balance.

    When a class has too few candidates both classes are clamped to the
    smaller size and a warning is emitted.
    """
    n = G_next.n
    rng = make_rng(seed)
    history = list(history)
    composition: dict[str, int] = {}
    if mode == "all":
        pos_pool = _keys(G_next)
        excluded = pos_pool
        if exclude_historical:
            excluded = np.unique(np.concatenate([pos_pool] + [_keys(h) for h in history]))
        available_neg = n * (n - 1) // 2 - len(excluded)
        c = min(count_per_class, len(pos_pool), available_neg)
        if c < count_per_class:
            warnings.warn(f"clamping test pairs to {c} per class "
                          f"({len(pos_pool)} linked, {available_neg} non-linked available)", stacklevel=2)
        pos = _choose(rng, pos_pool, c)
        neg = _sample_absent(rng, n, excluded, c)
        composition = {"linked": int(c), "non_linked": int(c)}
        available = {"linked": int(len(pos_pool)), "non_linked": int(available_neg)}
    elif mode == "new":
        if G_prev is None:
            raise ValueError("new-links mode needs the previous snapshot")
        delta = diff_snapshots(G_prev, G_next)
        added = delta.added_edges[:, 0] * n + delta.added_edges[:, 1]
        removed = delta.removed_edges[:, 0] * n + delta.removed_edges[:, 1]
        excluded = np.unique(np.concatenate([_keys(G_next), _keys(G_prev)] + [_keys(h) for h in history]))
        available_neg = len(removed) + n * (n - 1) // 2 - len(excluded)
        c = min(count_per_class, len(added), available_neg)
        if c < count_per_class:
            warnings.warn(f"clamping test pairs to {c} per class "
                          f"({len(added)} added, {available_neg} non-linked available)", stacklevel=2)
        pos = _choose(rng, added, c)
        neg_removed = _choose(rng, removed, min(c, len(removed)))
        neg_never = _sample_absent(rng, n, excluded, c - len(neg_removed))
        neg = np.concatenate([neg_removed, neg_never])
        available = {"linked": int(len(added)), "non_linked": int(available_neg)}
        composition = {"linked_added": int(c), "non_linked_deleted": int(len(neg_removed)),
                       "non_linked_never": int(len(neg_never))}
    else:
        raise ValueError(f"unknown mode {mode!r}; expected 'all' or 'new'")
    pairs = np.concatenate([_to_pairs(pos, n), _to_pairs(neg, n)])
    labels = np.r_[np.ones(len(pos), dtype=np.int64), np.zeros(len(neg), dtype=np.int64)]
    return TestPairSet(pairs, labels, mode, seed, composition, available)


# --- reports ------------------------------------------------------------------

@dataclass
class EvalReport:
    auc_roc: float
    auc_pr: float
    prediction_error: float | None = None
    n_pairs: int = 0
    mode: str = "all"
    composition: dict = field(default_factory=dict)
    baselines: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def evaluate(Z_t: np.ndarray, G_next: GraphSnapshot, count_per_class: int = 100_000, mode: str = "all",
             seed: int = 0, G_prev: GraphSnapshot | None = None, history: Sequence[GraphSnapshot] = (),
             baselines: Sequence[str] = (), exclude_historical: bool = False,
             train: DynamicGraph | None = None, traj=None, config: dict | None = None,
             test_pairs: TestPairSet | None = None) -> EvalReport:
    """Score sampled pairs with ``Z_t`` (and optional baselines) and bundle the metrics.

    ``baselines`` may contain ``"aa"`` (needs ``history``, the training
    snapshots) and ``"gpre"`` (needs ``G_prev``).  Prediction error is
    included when both ``train`` and ``traj`` are given.  A pre-drawn
    ``test_pairs`` set replaces the sampling step.
    """
    timings = {}
    t0 = time.perf_counter()
    tps = test_pairs
    if tps is None:
        tps = sample_test_pairs(G_next, count_per_class, mode, seed, G_prev=G_prev, history=history,
                                exclude_historical=exclude_historical)
    timings["sample_ms"] = 1000 * (time.perf_counter() - t0)
    for cls, key, name in ((LINKED, "linked", "linked"), (NON_LINKED, "non_linked", "non-linked")):
        # a pre-drawn set read from text carries no availability counts
        empty = tps.available[key] == 0 if tps.available else not np.any(tps.labels == cls)
        if empty:
            raise ValueError(f"no {name} test pairs available")
    if Z_t.shape[0] != G_next.n:
        raise ValueError(f"latent space has {Z_t.shape[0]} rows but the test snapshot has {G_next.n} nodes")
    t0 = time.perf_counter()
    scores = score_pairs(Z_t, tps.pairs)
    timings["score_ms"] = 1000 * (time.perf_counter() - t0)
    report = EvalReport(auc_roc=auc_roc(scores, tps.labels), auc_pr=auc_pr(scores, tps.labels),
                        n_pairs=len(tps), mode=tps.mode, composition=tps.composition,
                        config=dict(config or {}))
    for name in baselines:
        t0 = time.perf_counter()
        if name == "aa":
            if not history:
                raise ValueError("the aa baseline needs the training snapshots")
            b = adamic_adar_pairs(aggregate(history), tps.pairs)
        elif name == "gpre":
            if G_prev is None:
                raise ValueError("the gpre baseline needs the last training snapshot")
            b = previous_graph_pairs(G_prev, tps.pairs)
        else:
            raise ValueError(f"unknown baseline {name!r}")
        report.baselines[name] = {"auc_roc": auc_roc(b, tps.labels), "auc_pr": auc_pr(b, tps.labels)}
        timings[f"{name}_ms"] = 1000 * (time.perf_counter() - t0)
    if train is not None and traj is not None and train.T >= 2:
        report.prediction_error = prediction_error(train, traj)
    report.timings = timings
    return report
