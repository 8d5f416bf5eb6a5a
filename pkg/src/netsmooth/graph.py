"""
Graph topologies, Metropolis combination weights and the graph Laplacian.

Nodes are indexed from 0. Every neighbourhood contains the node itself.
"""

from __future__ import annotations

import csv
import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Graph:
    """Undirected graph with self-inclusive neighbourhoods.

    Parameters
    ----------
    K : int
        Number of nodes.
    neighborhoods : tuple of tuple of int
        Sorted neighbour indices of each node, the node itself included.
    coords : ndarray, shape (K, 2)
        Node positions.
    connected : bool
        Whether every node is reachable from node 0.
    """

    K: int
    neighborhoods: tuple[tuple[int, ...], ...]
    coords: np.ndarray
    connected: bool

    def degrees(self) -> np.ndarray:
        """Self-inclusive neighbourhood sizes |N_k|."""
        return np.array([len(nb) for nb in self.neighborhoods], dtype=int)

    def adjacency(self) -> np.ndarray:
        """Boolean K x K adjacency including the diagonal."""
        adj = np.zeros((self.K, self.K), dtype=bool)
        for k, nb in enumerate(self.neighborhoods):
            adj[k, list(nb)] = True
        return adj


def _is_connected(neighborhoods) -> bool:
    K = len(neighborhoods)
    if K == 0:
        return True
    seen = {0}
    queue = deque([0])
    while queue:
        k = queue.popleft()
        for ell in neighborhoods[k]:
            if ell not in seen:
                seen.add(ell)
                queue.append(ell)
    return len(seen) == K


def graph_from_adjacency(adj, coords=None) -> Graph:
    """Build a `Graph` from a symmetric boolean adjacency matrix.

    Self-loops are added if missing. Raises ``ValueError`` if `adj` is not
    symmetric.
    """
    adj = np.array(adj, dtype=bool)
    K = adj.shape[0]
    if adj.shape != (K, K):
        raise ValueError(f"adjacency must be square, got {adj.shape}")
    if not np.array_equal(adj, adj.T):
        raise ValueError("adjacency must be symmetric")
    adj = adj | np.eye(K, dtype=bool)
    neighborhoods = tuple(tuple(int(j) for j in np.flatnonzero(row)) for row in adj)
    if coords is None:
        coords = np.zeros((K, 2))
    coords = np.asarray(coords, dtype=float).reshape(K, 2)
    return Graph(K, neighborhoods, coords, _is_connected(neighborhoods))


def geometric_graph(coords, radius: float) -> Graph:
    """Connect every pair of nodes whose Euclidean distance is at most `radius`."""
    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    if radius <= 0:
        raise ValueError("radius must be positive")
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=-1))
    return graph_from_adjacency(dist <= radius, coords)


def random_geometric_graph(K: int, radius: float, seed: int) -> Graph:
    """Random geometric graph on the unit square (no wraparound).

    Coordinates are drawn uniformly in [0, 1]^2. Disconnected outcomes are
    reported through ``Graph.connected``; see `connected_geometric_graph`
    for the resampling policy used by the experiments.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    if not 0 < radius <= np.sqrt(2):
        raise ValueError("radius must lie in (0, sqrt(2)]")
    rng = np.random.default_rng(seed)
    return geometric_graph(rng.uniform(0.0, 1.0, size=(K, 2)), radius)


def connected_geometric_graph(K: int, radius: float, seed: int,
                              max_attempts: int = 100) -> tuple[Graph, int]:
    """Resample with seed, seed+1, ... until the geometric graph is connected.

    Returns the graph and the seed that produced it.
    """
    for attempt in range(max_attempts):
        g = random_geometric_graph(K, radius, seed + attempt)
        if g.connected:
            return g, seed + attempt
    raise RuntimeError(
        f"no connected graph with K={K}, radius={radius} after {max_attempts} attempts")


def ring_graph(K: int) -> Graph:
    """Cycle on `K` nodes placed evenly on a circle inside the unit square."""
    adj = np.zeros((K, K), dtype=bool)
    if K > 1:
        k = np.arange(K)
        adj[k, (k + 1) % K] = True
        adj = adj | adj.T
    angles = 2 * np.pi * np.arange(K) / K
    coords = 0.5 + 0.4 * np.column_stack([np.cos(angles), np.sin(angles)])
    return graph_from_adjacency(adj, coords)


def knn_graph(coords, k_neighbors: int) -> Graph:
    """Symmetrised k-nearest-neighbour graph.

    Node l is adjacent to k if l is among the `k_neighbors` nearest nodes of
    k or vice versa. Distance ties are broken by the lower node index.
    """
    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    K = coords.shape[0]
    if not 1 <= k_neighbors < K:
        raise ValueError(f"k_neighbors must lie in [1, K-1], got {k_neighbors} for K={K}")
    if len(np.unique(coords, axis=0)) != K:
        raise ValueError("coordinates must be pairwise distinct")
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=-1))
    np.fill_diagonal(dist, np.inf)
    adj = np.zeros((K, K), dtype=bool)
    for k in range(K):
        # stable sort keeps lower indices first among equal distances
        nearest = np.argsort(dist[k], kind="stable")[:k_neighbors]
        adj[k, nearest] = True
    return graph_from_adjacency(adj | adj.T, coords)


def metropolis_weights(g: Graph) -> np.ndarray:
    """Metropolis combination matrix of `g`.

    For l in N_k with l != k, ``a[k, l] = 1 / max(n_k, n_l)`` where n_k is the
    self-inclusive degree; the diagonal takes the remaining mass so every row
    sums to one. The result is symmetric and doubly stochastic.
    """
    n = g.degrees()
    A = np.zeros((g.K, g.K))
    for k, nb in enumerate(g.neighborhoods):
        for ell in nb:
            if ell != k:
                A[k, ell] = 1.0 / max(n[k], n[ell])
    A[np.diag_indices(g.K)] = 1.0 - A.sum(axis=1)
    return A


def degree_matrix(A, g: Graph) -> np.ndarray:
    """Diagonal matrix with entries sum over l in N_k of a[k, l]."""
    A = np.asarray(A, dtype=float)
    d = np.array([A[k, list(nb)].sum() for k, nb in enumerate(g.neighborhoods)])
    return np.diag(d)


def laplacian(A, g: Graph) -> np.ndarray:
    """Graph Laplacian ``L = D - A``.

    With self-inclusive neighbourhoods and a doubly stochastic `A`, D is the
    identity and ``L = I - A``.
    """
    A = np.asarray(A, dtype=float)
    if A.shape != (g.K, g.K):
        raise ValueError(f"A has shape {A.shape}, expected {(g.K, g.K)}")
    return degree_matrix(A, g) - A


def smoothness(L, v) -> float:
    """Quadratic form ``v^T L v`` measuring how much `v` varies over edges."""
    L = np.asarray(L, dtype=float)
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != L.shape[0]:
        raise ValueError(f"v has shape {v.shape}, expected ({L.shape[0]},)")
    return float(v @ L @ v)


def edge_smoothness(A, v) -> float:
    """Edge-sum form ``0.5 * sum_{k,l} a[k,l] (v_k - v_l)^2``."""
    A = np.asarray(A, dtype=float)
    v = np.asarray(v, dtype=float)
    return float(0.5 * (A * (v[:, None] - v[None, :]) ** 2).sum())


# -- serialisation ---------------------------------------------------------

def graph_to_json(g: Graph) -> dict:
    return {
        "K": g.K,
        "coords": g.coords.tolist(),
        "neighbors": [list(nb) for nb in g.neighborhoods],
    }


def graph_from_json(doc: dict) -> Graph:
    """Inverse of `graph_to_json`. Validates symmetry and index ranges."""
    K = int(doc["K"])
    adj = np.zeros((K, K), dtype=bool)
    for k, nb in enumerate(doc["neighbors"]):
        for ell in nb:
            if not 0 <= ell < K:
                raise ValueError(f"neighbour index {ell} of node {k} out of range")
            adj[k, ell] = True
    if len(doc["neighbors"]) != K:
        raise ValueError("neighbors list length does not match K")
    return graph_from_adjacency(adj, doc.get("coords"))


def save_graph(g: Graph, path) -> None:
    Path(path).write_text(json.dumps(graph_to_json(g)))


def load_graph(path) -> Graph:
    return graph_from_json(json.loads(Path(path).read_text()))


def save_matrix_csv(M, path) -> None:
    """Write a dense matrix row-major with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in np.atleast_2d(M):
            writer.writerow([f"{x:.17g}" for x in row])


def load_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([[float(x) for x in row] for row in csv.reader(fh) if row])
