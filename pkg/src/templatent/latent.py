"""Latent-space types and the numerical pieces shared by every solver.

A latent space is a plain ``(n, k)`` float64 array whose rows are
nonnegative with unit Euclidean norm; a :class:`Trajectory` is the ordered
list of such arrays for ``tau = 1..t`` plus fit diagnostics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import IO, Sequence

import numpy as np

from . import _kernels as K
from .graph import DynamicGraph, GraphSnapshot

ZERO_NORM = K.ZERO_NORM


class NumericalError(RuntimeError):
    """Raised when a solver produces NaN or Inf; ``state`` holds a diagnostic dump."""

    def __init__(self, message: str, state: dict | None = None):
        super().__init__(message)
        self.state = state or {}


# --- step schedule -------------------------------------------------------

def lipschitz_constant(n: int, k: int) -> float:
    """Gradient Lipschitz bound of the per-node subproblem: ``2 sqrt(n^2 - 2n + k)``."""
    if n < 2 or k < 1:
        raise ValueError(f"need n >= 2 and k >= 1, got n={n}, k={k}")
    return 2.0 * math.sqrt(n * n - 2 * n + k)


class StepSchedule:
    """Memoized Nesterov sequence ``a_0 = 1, a_r = (1 + sqrt(4 a_{r-1}^2 + 1)) / 2``."""

    def __init__(self, L: float | None = None):
        self.L = L
        self.a = [1.0]

    def __getitem__(self, r: int) -> float:
        if r < 0:
            raise ValueError("iteration index must be nonnegative")
        a = self.a
        while len(a) <= r:
            a.append((1.0 + math.sqrt(4.0 * a[-1] ** 2 + 1.0)) / 2.0)
        return a[r]

    def alpha(self, r: int, L: float | None = None) -> float:
        L = self.L if L is None else L
        if L is None or L <= 0:
            raise ValueError("a positive Lipschitz constant is required")
        a0, a1 = self[r], self[r + 1]
        return (a1 + a0 - 1.0) / (a1 * L)


_SCHEDULE = StepSchedule()


def nesterov_a(r: int) -> float:
    return _SCHEDULE[r]


def step_coefficient(r: int, L: float) -> float:
    """``alpha_r = (a_{r+1} + a_r - 1) / (a_{r+1} L)``."""
    return _SCHEDULE.alpha(r, L)


# --- rows and Gram -------------------------------------------------------

def row_normalize(row) -> np.ndarray:
    """Scale to unit norm; a (numerically) zero row becomes the uniform row ``1/sqrt(k)``."""
    row = np.asarray(row, dtype=np.float64)
    norm = np.linalg.norm(row)
    if norm <= ZERO_NORM:
        return np.full(row.shape, 1.0 / math.sqrt(row.shape[0]))
    return row / norm


def normalize_rows(Z: np.ndarray) -> np.ndarray:
    out = np.empty_like(Z, dtype=np.float64)
    for u in range(Z.shape[0]):
        out[u] = row_normalize(Z[u])
    return out


def gram(Z: np.ndarray) -> np.ndarray:
    return Z.T @ Z


def gram_row_swap(G: np.ndarray, old_row, new_row) -> np.ndarray:
    old_row = np.asarray(old_row, dtype=np.float64)
    new_row = np.asarray(new_row, dtype=np.float64)
    return G - np.outer(old_row, old_row) + np.outer(new_row, new_row)


def random_space(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform(0, 1) entries, rows normalized."""
    Z = rng.random((n, k))
    norms = np.linalg.norm(Z, axis=1, keepdims=True)
    bad = norms[:, 0] <= ZERO_NORM
    Z = Z / np.where(norms > ZERO_NORM, norms, 1.0)
    Z[bad] = 1.0 / math.sqrt(k)
    return Z


def check_latent(Z: np.ndarray, atol: float = 1e-9) -> None:
    """Raise ``ValueError`` unless ``Z`` is finite, nonnegative and has unit rows."""
    Z = np.asarray(Z)
    if Z.ndim != 2:
        raise ValueError("a latent space is a 2-d array")
    if not np.all(np.isfinite(Z)):
        raise ValueError("latent space contains NaN or Inf")
    if np.any(Z < 0):
        raise ValueError("latent space has negative entries")
    dev = np.abs(np.linalg.norm(Z, axis=1) - 1.0)
    if dev.size and dev.max() > atol:
        raise ValueError(f"row norms deviate from 1 by up to {dev.max():.3g}")


# --- config and trajectory ------------------------------------------------

DEFAULT_LAMBDA = {"global": 1e-4, "local": 1e-2, "incremental": 1e-2}


def default_zeta(n: int) -> float:
    return math.sqrt(-math.log(1.0 - 1.0 / n))


def default_delta(n: int, k: int) -> float:
    return 2.0 * default_zeta(n) / k


@dataclass
class SolverConfig:
    """Hyperparameters shared by all solvers.

    ``lam=None`` selects the per-algorithm default; ``zeta``/``delta`` left
    as ``None`` are derived from the graph size at fit time.
    """

    k: int = 20
    lam: float | None = None
    max_iters: int = 100
    tol: float = 1e-4
    seed: int = 0
    zeta: float | None = None
    delta: float | None = None
    binarize: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        for name in ("zeta", "delta"):
            val = getattr(self, name)
            if val is not None and val < 0:
                raise ValueError(f"{name} must be >= 0")

    def lam_for(self, algo: str) -> float:
        return DEFAULT_LAMBDA[algo] if self.lam is None else self.lam

    def thresholds(self, n: int) -> tuple[float, float]:
        zeta = default_zeta(n) if self.zeta is None else self.zeta
        delta = 2.0 * zeta / self.k if self.delta is None else self.delta
        return zeta, delta

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Trajectory:
    spaces: list[np.ndarray]
    objective_trace: list[float] = field(default_factory=list)
    iterations_used: list[int] = field(default_factory=list)
    local_traces: list[list[float]] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.spaces)

    def __getitem__(self, i) -> np.ndarray:
        return self.spaces[i]

    @property
    def last(self) -> np.ndarray:
        return self.spaces[-1]


def _spaces(traj) -> Sequence[np.ndarray]:
    return traj.spaces if isinstance(traj, Trajectory) else traj


# --- objectives -----------------------------------------------------------

def _check_dims(snap: GraphSnapshot, Z: np.ndarray) -> None:
    if Z.ndim != 2 or Z.shape[0] != snap.n:
        raise ValueError(f"latent space has {Z.shape[0]} rows but the snapshot has {snap.n} nodes")


def snapshot_loss(snap: GraphSnapshot, Z: np.ndarray) -> float:
    """``||G - Z Z^T||_F^2`` over off-diagonal entries (ordered pairs)."""
    _check_dims(snap, Z)
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    return float(K.snapshot_loss(snap.indptr, snap.indices, snap.data, Z))


def objective(G: DynamicGraph, traj, lam: float) -> float:
    spaces = _spaces(traj)
    if len(spaces) != G.T:
        raise ValueError(f"trajectory has {len(spaces)} spaces for {G.T} snapshots")
    total = sum(snapshot_loss(s, Z) for s, Z in zip(G, spaces))
    if lam:
        for tau in range(1, G.T):
            total += lam * float(K.smoothness(np.ascontiguousarray(spaces[tau]),
                                              np.ascontiguousarray(spaces[tau - 1])))
    return float(total)


def local_objective(snap: GraphSnapshot, Z: np.ndarray, Z_prev: np.ndarray | None, lam: float) -> float:
    total = snapshot_loss(snap, Z)
    if Z_prev is not None and lam:
        if Z_prev.shape != Z.shape:
            raise ValueError("previous space has a different shape")
        total += lam * float(K.smoothness(np.ascontiguousarray(Z), np.ascontiguousarray(Z_prev)))
    return float(total)


# --- gradient -------------------------------------------------------------

def gradient_row(row, gram_matrix, nbr_sum, temporal, lam) -> np.ndarray:
    """Simplified per-node gradient, valid where the row has unit norm."""
    return -lam * temporal + 2.0 * row @ gram_matrix - 2.0 * row - 2.0 * nbr_sum


def gradient_node(snap: GraphSnapshot, Z: np.ndarray, u: int, prev_row=None, next_row=None,
                  lam: float = 0.0, gram_matrix=None) -> np.ndarray:
    """Gradient of the per-node subproblem at row ``u``; absent temporal rows count as zero."""
    k = Z.shape[1]
    temporal = np.zeros(k)
    if prev_row is not None:
        temporal = temporal + prev_row
    if next_row is not None:
        temporal = temporal + next_row
    if gram_matrix is None:
        gram_matrix = gram(Z)
    nbrs, wts = snap.neighbors(u)
    nbr_sum = wts @ Z[nbrs] if len(nbrs) else np.zeros(k)
    return gradient_row(Z[u], gram_matrix, nbr_sum, temporal, lam)


def node_objective(snap: GraphSnapshot, Z: np.ndarray, u: int, row=None, prev_row=None,
                   next_row=None, lam: float = 0.0) -> float:
    """Per-node subproblem ``J`` evaluated with row ``u`` replaced by ``row``."""
    row = Z[u] if row is None else np.asarray(row, dtype=np.float64)
    target = snap.adjacency[u].toarray().ravel()
    scores = Z @ row
    mask = np.ones(Z.shape[0], dtype=bool)
    mask[u] = False
    val = float(np.sum((target[mask] - scores[mask]) ** 2))
    if prev_row is not None:
        val += lam * (1.0 - float(row @ prev_row))
    if next_row is not None:
        val += lam * (1.0 - float(row @ next_row))
    return val


# --- dense oracles (tests and debugging only) -----------------------------

DENSE_LIMIT = 64


def _dense_loss(snap: GraphSnapshot, Z: np.ndarray) -> float:
    n = snap.n
    if n > DENSE_LIMIT:
        raise ValueError(f"dense oracle refuses n > {DENSE_LIMIT}")
    A = snap.adjacency.toarray()
    total = 0.0
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            s = 0.0
            for c in range(Z.shape[1]):
                s += Z[a, c] * Z[b, c]
            total += (A[a, b] - s) ** 2
    return total


def _dense_smooth(Z: np.ndarray, Zp: np.ndarray) -> float:
    total = 0.0
    for a in range(Z.shape[0]):
        s = 0.0
        for c in range(Z.shape[1]):
            s += Z[a, c] * Zp[a, c]
        total += 1.0 - s
    return total


def dense_objective_oracle(G: DynamicGraph, traj, lam: float) -> float:
    """Literal triple-loop evaluation of the temporal objective (n <= 64)."""
    spaces = _spaces(traj)
    if G.n > DENSE_LIMIT:
        raise ValueError(f"dense oracle refuses n > {DENSE_LIMIT}")
    total = sum(_dense_loss(s, Z) for s, Z in zip(G, spaces))
    for tau in range(1, G.T):
        total += lam * _dense_smooth(spaces[tau], spaces[tau - 1])
    return total


def dense_local_objective_oracle(snap: GraphSnapshot, Z, Z_prev, lam: float) -> float:
    total = _dense_loss(snap, Z)
    if Z_prev is not None:
        total += lam * _dense_smooth(Z, Z_prev)
    return total


def dense_prediction_error_oracle(G: DynamicGraph, traj) -> float:
    spaces = _spaces(traj)
    return sum(math.sqrt(_dense_loss(G[tau], spaces[tau - 1])) for tau in range(1, G.T)) / (G.T - 1)


# --- persistence ------------------------------------------------------------

def save_latent(fh: IO[str], Z: np.ndarray, tau: int) -> None:
    n, k = Z.shape
    fh.write(f"{n} {k} {tau}\n")
    for row in Z:
        fh.write(" ".join(f"{x:.17g}" for x in row))
        fh.write("\n")


def load_latent(fh: IO[str]) -> tuple[np.ndarray, int]:
    header = fh.readline().split()
    if len(header) != 3:
        raise ValueError("latent file header must be 'n k tau'")
    n, k, tau = (int(x) for x in header)
    Z = np.loadtxt(fh, dtype=np.float64, ndmin=2) if n else np.empty((0, k))
    if Z.shape != (n, k):
        raise ValueError(f"latent file declares {n}x{k}, found {Z.shape[0]}x{Z.shape[1]}")
    return Z, tau
