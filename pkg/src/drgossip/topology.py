"""Communication graphs, Metropolis mixing matrices and their spectral checks.

RNG streams (frozen by golden files, do not reorder draws):

* Erdos-Renyi: attempt ``a`` uses ``default_rng([seed, a])`` and draws one
  uniform per unordered pair ``(i, j)``, ``i < j``, in lexicographic order.
* geometric: attempt ``a`` uses ``default_rng([seed, a])`` and draws a
  ``(K, 2)`` array of positions in the unit square.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAX_ATTEMPTS = 1000


class GraphError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on nodes ``0..num_nodes-1``.

    ``edges`` holds each unordered pair once as ``(i, j)`` with ``i < j``.
    """

    num_nodes: int
    edges: frozenset
    degrees: tuple = field(init=False)

    def __post_init__(self):
        norm = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if not (0 <= i < self.num_nodes and 0 <= j < self.num_nodes):
                raise GraphError(f"edge ({i}, {j}) out of range for K={self.num_nodes}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))
        deg = [0] * self.num_nodes
        for i, j in norm:
            deg[i] += 1
            deg[j] += 1
        object.__setattr__(self, "degrees", tuple(deg))

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    def neighbors(self, i: int) -> list[int]:
        return sorted([b for a, b in self.edges if a == i] + [a for a, b in self.edges if b == i])

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.num_nodes, self.num_nodes))
        for i, j in self.edges:
            A[i, j] = A[j, i] = 1.0
        return A

    def is_connected(self) -> bool:
        adj = [[] for _ in range(self.num_nodes)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return len(seen) == self.num_nodes

    def to_edgelist(self) -> str:
        lines = [str(self.num_nodes)] + [f"{i} {j}" for i, j in self.sorted_edges()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_edgelist(cls, text: str) -> "Graph":
        rows = [ln.split() for ln in text.splitlines() if ln.strip()]
        if not rows or len(rows[0]) != 1:
            raise GraphError("edge list must start with a line holding K")
        K = int(rows[0][0])
        edges = []
        for r in rows[1:]:
            if len(r) != 2:
                raise GraphError(f"bad edge line: {' '.join(r)!r}")
            edges.append((int(r[0]), int(r[1])))
        return cls(K, frozenset(edges))

    def save(self, path) -> None:
        Path(path).write_text(self.to_edgelist())

    @classmethod
    def load(cls, path) -> "Graph":
        return cls.from_edgelist(Path(path).read_text())


def generate_erdos_renyi(K: int, p: float, seed: int) -> Graph:
    if K < 2:
        raise GraphError("Erdos-Renyi graph needs K >= 2")
    if not 0.0 < p <= 1.0:
        raise GraphError(f"connectivity ratio p must lie in (0, 1], got {p}")
    iu, ju = np.triu_indices(K, k=1)
    for attempt in range(MAX_ATTEMPTS):
        rng = np.random.default_rng([seed, attempt])
        keep = rng.random(iu.size) < p
        g = Graph(K, frozenset(zip(iu[keep].tolist(), ju[keep].tolist())))
        if g.is_connected():
            return g
    raise GraphError(
        f"no connected Erdos-Renyi sample after {MAX_ATTEMPTS} attempts (K={K}, p={p}); increase p"
    )


def generate_ring(K: int) -> Graph:
    # K=2 degenerates to the single edge {0, 1}
    if K < 2:
        raise GraphError("ring needs K >= 2")
    return Graph(K, frozenset((i, (i + 1) % K) for i in range(K)))


def generate_grid(rows: int, cols: int, K: int | None = None) -> Graph:
    if rows < 1 or cols < 1:
        raise GraphError("grid dimensions must be positive")
    if K is not None and rows * cols != K:
        raise GraphError(f"grid {rows}x{cols} has {rows * cols} nodes, expected K={K}")
    edges = set()
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            if c + 1 < cols:
                edges.add((u, u + 1))
            if r + 1 < rows:
                edges.add((u, u + cols))
    g = Graph(rows * cols, frozenset(edges))
    if g.num_nodes < 2:
        raise GraphError("grid needs at least 2 nodes")
    return g


def generate_geometric(K: int, radius: float = 0.5, seed: int = 0) -> Graph:
    if K < 2:
        raise GraphError("geometric graph needs K >= 2")
    if radius <= 0:
        raise GraphError("radius must be positive")
    iu, ju = np.triu_indices(K, k=1)
    for attempt in range(MAX_ATTEMPTS):
        rng = np.random.default_rng([seed, attempt])
        pos = rng.random((K, 2))
        dist = np.sqrt(((pos[iu] - pos[ju]) ** 2).sum(axis=1))
        keep = dist <= radius
        g = Graph(K, frozenset(zip(iu[keep].tolist(), ju[keep].tolist())))
        if g.is_connected():
            return g
    raise GraphError(
        f"no connected geometric sample after {MAX_ATTEMPTS} attempts (K={K}, radius={radius})"
    )


@dataclass(frozen=True, eq=False)
class MixingMatrix:
    W: np.ndarray
    spectral_norm: float

    @property
    def K(self) -> int:
        return self.W.shape[0]


def metropolis_weights(g: Graph) -> MixingMatrix:
    """W_ij = 1 / (1 + max(d_i, d_j)) on edges, diagonal completes each row to 1."""
    if not g.is_connected():
        raise GraphError("Metropolis weights require a connected graph")
    K = g.num_nodes
    W = np.zeros((K, K))
    d = g.degrees
    for i, j in g.edges:
        w = 1.0 / (1.0 + max(d[i], d[j]))
        W[i, j] = w
        W[j, i] = w
    for i in range(K):
        # fixed summation order keeps the diagonal identical for every build
        W[i, i] = 1.0 - sum(W[i, l] for l in g.neighbors(i))
    W.setflags(write=False)
    return MixingMatrix(W, spectral_norm(W))


def spectral_norm(W: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest singular value of ``W^T W - J`` by power iteration.

    The matrix is symmetric PSD for symmetric doubly stochastic ``W``; the
    iteration stops once the Rayleigh quotient changes by less than ``tol``
    relative to its value.
    """
    W = np.asarray(W, dtype=float)
    K = W.shape[0]
    M = W.T @ W - np.full((K, K), 1.0 / K)
    if not np.any(np.abs(M) > 1e-15):
        return 0.0
    x = np.random.default_rng(0).standard_normal(K)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = M @ x
        ny = np.linalg.norm(y)
        if ny < 1e-300:
            return 0.0
        lam_new = float(x @ y)
        x = y / ny
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-300):
            # one extra product so the estimate uses the converged direction
            return abs(float(x @ (M @ x)))
        lam = lam_new
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations")


def contraction_check(A: np.ndarray, W: np.ndarray, n: int, rho: float | None = None):
    """Both sides of ``||A (W^n - J)||_F^2 <= rho^n ||A||_F^2``."""
    if n < 1:
        raise ValueError("power n must be >= 1")
    W = np.asarray(W, dtype=float)
    K = W.shape[0]
    if rho is None:
        rho = spectral_norm(W)
    D = np.linalg.matrix_power(W, n) - np.full((K, K), 1.0 / K)
    lhs = float(np.sum((A @ D) ** 2))
    rhs = float(rho**n * np.sum(np.asarray(A) ** 2))
    return lhs, rhs


def build_graph(kind: str, K: int, *, p: float = 0.5, radius: float = 0.5,
                rows: int | None = None, cols: int | None = None, seed: int = 0) -> Graph:
    if kind == "erdos_renyi":
        return generate_erdos_renyi(K, p, seed)
    if kind == "ring":
        return generate_ring(K)
    if kind == "grid":
        if rows is None or cols is None:
            raise GraphError("grid topology needs rows and cols")
        return generate_grid(rows, cols, K)
    if kind == "geometric":
        return generate_geometric(K, radius, seed)
    if kind == "complete":
        return Graph(K, frozenset((i, j) for i in range(K) for j in range(i + 1, K)))
    raise GraphError(f"unknown topology kind {kind!r}")
