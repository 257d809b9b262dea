"""Communication topologies, Laplacians, and the consensus-orthogonal basis.

Conventions: agents are 0-indexed internally (1-indexed in the JSON wire
format), edge weights are symmetric and nonnegative, and every generated
graph carries unit self-loops.  Self-loops enter the adjacency and degree
matrices but cancel in the Laplacian.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Graph:
    """Undirected weighted graph over agents 0..n-1."""

    n: int
    edges: frozenset  # unordered pairs (i, j) with i < j, self-loops excluded
    w_adj: np.ndarray  # n x n symmetric weighted adjacency (self-loops on diagonal)
    connected: bool = field(default=False)

    def __post_init__(self):
        w = np.asarray(self.w_adj, dtype=float)
        if w.shape != (self.n, self.n):
            raise ValueError(f"adjacency shape {w.shape} does not match n={self.n}")
        if not np.allclose(w, w.T, atol=0.0):
            raise ValueError("adjacency must be exactly symmetric")
        if np.any(w < 0):
            raise ValueError("edge weights must be nonnegative")
        for i in range(self.n):
            for j in range(i + 1, self.n):
                has_edge = (i, j) in self.edges
                if has_edge != (w[i, j] > 0):
                    raise ValueError(f"edge set and weights disagree at ({i},{j})")
        if self.connected != _bfs_connected(self.n, self.edges):
            raise ValueError("connectivity flag inconsistent with reachability")
        object.__setattr__(self, "w_adj", w)

    @property
    def neighbor_counts(self) -> np.ndarray:
        """Number of neighbors of each agent, self excluded."""
        counts = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            counts[i] += 1
            counts[j] += 1
        return counts


@dataclass(frozen=True)
class LaplacianSet:
    """Laplacian of a graph together with its block lift to dimension d."""

    l_small: np.ndarray  # n x n
    l_big: np.ndarray  # (n d) x (n d), kron(l_small, I_d)
    degree: np.ndarray  # n x n diagonal weighted-degree matrix
    d: int


@dataclass(frozen=True)
class ConsensusBasis:
    """Orthonormal basis of the complement of the consensus direction.

    R has shape (n d) x ((n-1) d), R^T R = I, R^T (1 kron I_d) = 0 and
    R R^T = I - (1/n) 11^T.
    """

    r: np.ndarray
    n: int
    d: int


def _bfs_connected(n: int, edges) -> bool:
    if n <= 1:
        return True
    adj = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = [False] * n
    seen[0] = True
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return all(seen)


def _graph_from_edges(n: int, edges, weight: float = 1.0) -> Graph:
    edges = frozenset((min(i, j), max(i, j)) for i, j in edges if i != j)
    w = np.eye(n)  # unit self-loops
    for i, j in edges:
        w[i, j] = w[j, i] = weight
    return Graph(n=n, edges=edges, w_adj=w, connected=_bfs_connected(n, edges))


def erdos_renyi(n: int, p: float, seed: int, max_retries: int = 1000) -> Graph:
    """Sample a connected Erdos-Renyi graph with unit weights and self-loops.

    Each non-self pair is included independently with probability p.
    Disconnected samples are rejected and redrawn from an incremented
    sub-seed, so the result is deterministic in (n, p, seed).
    """
    if n < 2:
        raise ValueError("need at least two agents")
    if not 0.0 < p <= 1.0:
        raise ValueError("edge probability must be in (0, 1]")
    for attempt in range(max_retries):
        rng = np.random.default_rng([seed, attempt])
        mask = rng.random((n, n)) < p
        edges = [(i, j) for i in range(n) for j in range(i + 1, n) if mask[i, j]]
        if _bfs_connected(n, edges):
            return _graph_from_edges(n, edges)
    raise RuntimeError(
        f"no connected sample in {max_retries} retries; p={p} too small for n={n}"
    )


def ring(n: int) -> Graph:
    """Cycle graph 0-1-...-(n-1)-0 with unit weights."""
    if n < 3:
        raise ValueError("a ring needs at least three agents")
    return _graph_from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def path(n: int) -> Graph:
    """Path graph 0-1-...-(n-1) with unit weights."""
    if n < 2:
        raise ValueError("a path needs at least two agents")
    return _graph_from_edges(n, [(i, i + 1) for i in range(n - 1)])


def complete(n: int) -> Graph:
    if n < 2:
        raise ValueError("need at least two agents")
    return _graph_from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def from_weights(w_adj: np.ndarray) -> Graph:
    """Build a graph from an explicit symmetric weighted adjacency matrix."""
    w = np.asarray(w_adj, dtype=float)
    n = w.shape[0]
    edges = frozenset(
        (i, j) for i in range(n) for j in range(i + 1, n) if w[i, j] > 0
    )
    return Graph(n=n, edges=edges, w_adj=w, connected=_bfs_connected(n, edges))


def laplacian(g: Graph, d: int = 1) -> LaplacianSet:
    """Weighted Laplacian (degree minus adjacency) and its kron lift."""
    if d < 1:
        raise ValueError("block dimension must be positive")
    degree = np.diag(g.w_adj.sum(axis=1))
    l_small = degree - g.w_adj
    l_big = np.kron(l_small, np.eye(d))
    return LaplacianSet(l_small=l_small, l_big=l_big, degree=degree, d=d)


def metropolis_weights(g: Graph) -> np.ndarray:
    """Symmetric doubly stochastic mixing matrix from the Metropolis rule.

    W[i,j] = 1 / (1 + max(deg_i, deg_j)) on edges, diagonal absorbs the rest.
    Degrees count neighbors excluding self.
    """
    if not g.connected:
        raise ValueError("metropolis weights need a connected graph")
    deg = g.neighbor_counts
    w = np.zeros((g.n, g.n))
    for i, j in g.edges:
        w[i, j] = w[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return w


def consensus_basis(n: int, d: int = 1) -> ConsensusBasis:
    """Orthonormal complement of the consensus direction, lifted by kron.

    Built from the trailing columns of the Householder reflector that maps
    e_1 to 1_n/sqrt(n); any orthonormal complement works since downstream
    quantities are invariant to orthogonal re-parametrization.
    """
    if n < 2:
        raise ValueError("need at least two agents")
    ones = np.full(n, 1.0 / np.sqrt(n))
    u = ones - np.eye(n)[:, 0]
    h = np.eye(n) - 2.0 * np.outer(u, u) / (u @ u)
    q = h[:, 1:]  # columns orthogonal to 1_n
    r = np.kron(q, np.eye(d)) if d > 1 else q
    return ConsensusBasis(r=r, n=n, d=d)


def to_json(g: Graph) -> str:
    """Serialize to the 1-based wire format {n, edges, weights}."""
    edges = sorted((i + 1, j + 1) for i, j in g.edges)
    weights = []
    for i in range(g.n):
        for j in range(i, g.n):
            if g.w_adj[i, j] != 0.0:
                weights.append([i + 1, j + 1, g.w_adj[i, j]])
    return json.dumps({"n": g.n, "edges": [list(e) for e in edges], "weights": weights})


def from_json(text: str) -> Graph:
    obj = json.loads(text)
    n = int(obj["n"])
    w = np.zeros((n, n))
    for i, j, wij in obj["weights"]:
        w[i - 1, j - 1] = w[j - 1, i - 1] = float(wij)
    edges = frozenset((min(i, j) - 1, max(i, j) - 1) for i, j in obj["edges"])
    g = Graph(n=n, edges=edges, w_adj=w, connected=_bfs_connected(n, edges))
    return g
