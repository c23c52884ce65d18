"""Undirected graph container and structural predicates.

Every adjacency-derived operator in the package starts from the
:class:`Graph` built here. Graphs are unweighted, undirected, and
immutable after construction; edge input is forgiving (duplicates,
reversed pairs and self-pairs are cleaned up silently, since citation
dumps routinely contain all three).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Graph", "GraphConstructionError", "build_graph", "read_edge_list",
           "is_connected", "is_bipartite"]


class GraphConstructionError(ValueError):
    """Raised when an edge list cannot form a valid graph."""


@dataclass(frozen=True)
class Graph:
    """Immutable undirected graph.

    Attributes
    ----------
    n : int
        Number of nodes, indexed ``0..n-1``.
    edges : tuple[tuple[int, int], ...]
        Deduplicated undirected edges stored as ``(min, max)`` pairs in
        sorted order. No self-pairs.
    degree : np.ndarray
        Per-node incident-edge counts, ``sum(degree) == 2 * len(edges)``.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    degree: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.degree.setflags(write=False)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def neighbors(self) -> list[list[int]]:
        """Adjacency lists (sorted), excluding self-loops."""
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        for lst in adj:
            lst.sort()
        return adj


def build_graph(n: int, edge_list) -> Graph:
    """Build a :class:`Graph` from raw node pairs.

    Self-pairs are dropped; duplicate pairs (in either orientation) are
    merged. Any endpoint outside ``[0, n)`` raises, naming the pair.

    Parameters
    ----------
    n : int
        Node count, must be >= 1.
    edge_list : iterable of (int, int)
        Raw pairs; both orientations and repeats are accepted.
    """
    if n < 1:
        raise GraphConstructionError(f"node count must be >= 1, got {n}")
    seen: set[tuple[int, int]] = set()
    for pair in edge_list:
        i, j = int(pair[0]), int(pair[1])
        if not (0 <= i < n and 0 <= j < n):
            raise GraphConstructionError(
                f"edge ({pair[0]}, {pair[1]}) has an endpoint outside [0, {n})")
        if i == j:
            continue
        seen.add((i, j) if i < j else (j, i))
    edges = tuple(sorted(seen))
    degree = np.zeros(n, dtype=np.int64)
    for i, j in edges:
        degree[i] += 1
        degree[j] += 1
    return Graph(n=n, edges=edges, degree=degree)


def read_edge_list(path) -> tuple[Graph, dict[str, int]]:
    """Read the plain-text edge-list format: one edge per line, two
    whitespace-separated node identifiers.

    Identifiers are mapped to dense indices in first-seen order. Returns
    the graph and the identifier -> index map.
    """
    ids: dict[str, int] = {}
    pairs: list[tuple[int, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise GraphConstructionError(
                    f"{path}:{lineno}: expected two identifiers, got {len(parts)}")
            idx = []
            for tok in parts:
                if tok not in ids:
                    ids[tok] = len(ids)
                idx.append(ids[tok])
            pairs.append((idx[0], idx[1]))
    if not ids:
        raise GraphConstructionError(f"{path}: empty edge list")
    return build_graph(len(ids), pairs), ids


def is_connected(g: Graph) -> bool:
    """Whether every node is reachable from node 0 by graph traversal.

    Edgeless graphs with n > 1 report disconnected.
    """
    if g.n == 1:
        return True
    adj = g.neighbors()
    seen = np.zeros(g.n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return bool(seen.all())


def is_bipartite(g: Graph) -> bool:
    """2-colorability check by BFS. Edgeless graphs are bipartite."""
    adj = g.neighbors()
    color = np.full(g.n, -1, dtype=np.int8)
    for start in range(g.n):
        if color[start] != -1:
            continue
        color[start] = 0
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if color[v] == -1:
                    color[v] = 1 - color[u]
                    queue.append(v)
                elif color[v] == color[u]:
                    return False
    return True
