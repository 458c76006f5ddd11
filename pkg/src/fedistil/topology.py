"""Static undirected device graphs."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable


@dataclass(frozen=True)
class Graph:
    num_nodes: int
    edges: frozenset[tuple[int, int]]
    _adj: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.num_nodes < 1:
            raise ValueError("a graph needs at least one node")
        adj: list[list[int]] = [[] for _ in range(self.num_nodes)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        object.__setattr__(self, "_adj", tuple(tuple(sorted(a)) for a in adj))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def degree(self, i: int) -> int:
        return len(neighbors(self, i))

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)


def from_edges(num_nodes: int, edges: Iterable[Iterable[int]]) -> Graph:
    """Build a graph from an edge list, rejecting self-loops and duplicates."""
    canon: set[tuple[int, int]] = set()
    for e in edges:
        i, j = (int(v) for v in e)
        if not (0 <= i < num_nodes and 0 <= j < num_nodes):
            raise ValueError(f"edge ({i}, {j}) references a node outside [0, {num_nodes})")
        if i == j:
            raise ValueError(f"self-loop on node {i}")
        key = (min(i, j), max(i, j))
        if key in canon:
            raise ValueError(f"duplicate edge {key}")
        canon.add(key)
    return Graph(num_nodes, frozenset(canon))


def ring_lattice(n: int, k: int) -> Graph:
    """Circulant graph: node ``i`` links to ``i +- 1, ..., i +- k/2`` (mod n)."""
    if k % 2 != 0:
        raise ValueError(f"ring lattice degree k={k} must be even")
    if not 0 < k < n:
        raise ValueError(f"ring lattice needs 0 < k < n, got k={k}, n={n}")
    edges = set()
    for i in range(n):
        for off in range(1, k // 2 + 1):
            j = (i + off) % n
            edges.add((min(i, j), max(i, j)))
    return Graph(n, frozenset(edges))


def neighbors(graph: Graph, i: int) -> list[int]:
    if not 0 <= i < graph.num_nodes:
        raise IndexError(f"node {i} outside [0, {graph.num_nodes})")
    return list(graph._adj[i])


def is_connected(graph: Graph) -> bool:
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in graph._adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == graph.num_nodes
