"""Anonymous undirected topologies: construction, distances, balls, I/O.

Node handles are dense integers ``0..n-1``.  They exist for the simulator's
bookkeeping only; protocol guards never read them as identifiers.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

from .rng import Xorshift64Star

__all__ = [
    "Graph",
    "GraphError",
    "bfs_distances",
    "ball",
    "generate",
    "parse_edge_list",
    "write_edge_list",
    "graph_from_json",
    "graph_to_json",
]


class GraphError(ValueError):
    """Malformed, asymmetric, self-looped or disconnected topology."""


@dataclass(frozen=True)
class Graph:
    n: int
    adjacency: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.n < 1:
            raise GraphError("graph needs at least one node")
        if len(self.adjacency) != self.n:
            raise GraphError(f"adjacency has {len(self.adjacency)} rows for n={self.n}")
        for u, row in enumerate(self.adjacency):
            if list(row) != sorted(set(row)):
                raise GraphError(f"adjacency of {u} is not sorted and duplicate-free")
            for v in row:
                if not 0 <= v < self.n:
                    raise GraphError(f"edge {u}-{v} leaves the node range")
                if v == u:
                    raise GraphError(f"self-loop at {u}")
                if u not in self.adjacency[v]:
                    raise GraphError(f"edge {u}-{v} is not symmetric")
        if not _is_connected(self.n, self.adjacency):
            raise GraphError("graph is disconnected")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        rows: list[set[int]] = [set() for _ in range(n)]
        for u, v in edges:
            if u == v:
                raise GraphError(f"self-loop at {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f"edge {u}-{v} leaves the node range 0..{n - 1}")
            rows[u].add(v)
            rows[v].add(u)
        return cls(n, tuple(tuple(sorted(r)) for r in rows))

    def neighbors(self, u: int) -> tuple[int, ...]:
        return self.adjacency[u]

    def degree(self, u: int) -> int:
        return len(self.adjacency[u])

    @property
    def max_degree(self) -> int:
        return max(len(r) for r in self.adjacency)

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u in range(self.n) for v in self.adjacency[u] if u < v]

    @cached_property
    def nbr_array(self) -> np.ndarray:
        """``int32[n, max(1, Δ)]`` neighbor table padded with -1."""
        width = max(1, self.max_degree)
        table = np.full((self.n, width), -1, dtype=np.int32)
        for u, row in enumerate(self.adjacency):
            table[u, : len(row)] = row
        table.setflags(write=False)
        return table

    @cached_property
    def deg_array(self) -> np.ndarray:
        deg = np.array([len(r) for r in self.adjacency], dtype=np.int32)
        deg.setflags(write=False)
        return deg

    @cached_property
    def distance_matrix(self) -> np.ndarray:
        """All-pairs hop distances (BFS from every node)."""
        dist = np.empty((self.n, self.n), dtype=np.int32)
        for s in range(self.n):
            row = bfs_distances(self, [s])
            dist[s] = [row[v] for v in range(self.n)]
        dist.setflags(write=False)
        return dist

    @property
    def diameter(self) -> int:
        return int(self.distance_matrix.max())


def _is_connected(n: int, adjacency) -> bool:
    seen = [False] * n
    seen[0] = True
    stack = [0]
    while stack:
        u = stack.pop()
        for v in adjacency[u]:
            if not seen[v]:
                seen[v] = True
                stack.append(v)
    return all(seen)


def bfs_distances(g: Graph, sources: Iterable[int]) -> dict[int, int]:
    """Hop distance from every node to its nearest source."""
    dist: dict[int, int] = {}
    queue: deque[int] = deque()
    for s in sources:
        if s not in dist:
            dist[s] = 0
            queue.append(s)
    if not dist:
        raise ValueError("bfs_distances needs at least one source")
    while queue:
        u = queue.popleft()
        for v in g.adjacency[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def ball(g: Graph, center: int, radius: int) -> frozenset[int]:
    if radius < 0:
        raise ValueError("radius must be non-negative")
    dist = {center: 0}
    frontier = [center]
    for r in range(radius):
        nxt = []
        for u in frontier:
            for v in g.adjacency[u]:
                if v not in dist:
                    dist[v] = r + 1
                    nxt.append(v)
        frontier = nxt
    return frozenset(dist)


# -- generators ---------------------------------------------------------------

def generate(kind: str, **params) -> Graph:
    """Deterministic topology for ``(kind, params)``.

    kinds: ``path(n)``, ``cycle(n)``, ``grid(rows, cols)``, ``star(leaves)``,
    ``random_bounded_degree(n, max_degree, seed)``.
    """
    if kind == "path":
        n = int(params["n"])
        if n < 1:
            raise GraphError("path needs n >= 1")
        return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])
    if kind == "cycle":
        n = int(params["n"])
        if n < 3:
            raise GraphError("cycle needs n >= 3")
        return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])
    if kind == "grid":
        rows, cols = int(params["rows"]), int(params["cols"])
        if rows < 1 or cols < 1:
            raise GraphError("grid needs rows, cols >= 1")
        edges = []
        for r in range(rows):
            for c in range(cols):
                u = r * cols + c
                if c + 1 < cols:
                    edges.append((u, u + 1))
                if r + 1 < rows:
                    edges.append((u, u + cols))
        return Graph.from_edges(rows * cols, edges)
    if kind == "star":
        leaves = int(params["leaves"])
        return Graph.from_edges(leaves + 1, [(0, i) for i in range(1, leaves + 1)])
    if kind in ("random", "random_bounded_degree"):
        return random_bounded_degree(
            int(params["n"]), int(params.get("max_degree", params.get("delta", 4))),
            int(params.get("seed", 0)), params.get("extra_edges"))
    raise GraphError(f"unknown graph kind {kind!r}")


def random_bounded_degree(n: int, max_degree: int, seed: int,
                          extra_edges: int | None = None) -> Graph:
    """Random connected graph with every degree <= ``max_degree``.

    A random tree is grown first (node ``i`` of a shuffled order attaches to a
    uniformly drawn earlier node that still has spare degree), then
    ``extra_edges`` random chords (default ``n``) are attempted, each kept only
    if it respects the degree bound and is new.
    """
    if n < 1:
        raise GraphError("n must be >= 1")
    if max_degree < 2 and n > 2:
        raise GraphError(f"cannot connect {n} nodes with max degree {max_degree}")
    rng = Xorshift64Star(seed)
    order = list(range(n))
    rng.shuffle(order)
    deg = [0] * n
    edges: set[tuple[int, int]] = set()

    def add(u: int, v: int) -> None:
        edges.add((min(u, v), max(u, v)))
        deg[u] += 1
        deg[v] += 1

    for i in range(1, n):
        u = order[i]
        spare = [w for w in order[:i] if deg[w] < max_degree]
        add(u, spare[rng.randbelow(len(spare))])
    attempts = n if extra_edges is None else int(extra_edges)
    for _ in range(attempts):
        if n < 2:
            break
        u, v = rng.randbelow(n), rng.randbelow(n)
        if u == v or (min(u, v), max(u, v)) in edges:
            continue
        if deg[u] < max_degree and deg[v] < max_degree:
            add(u, v)
    return Graph.from_edges(n, sorted(edges))


# -- text and JSON forms ---------------------------------------------------------

def parse_edge_list(text: str, n: int | None = None) -> Graph:
    """One ``u v`` pair per line; ``#`` starts a comment.

    The node count is ``max handle + 1`` unless a ``# n = N`` header (as
    written by :func:`write_edge_list`) or the ``n`` argument says otherwise.
    """
    edges = []
    declared = n
    for lineno, raw in enumerate(text.splitlines(), 1):
        line, _, comment = raw.partition("#")
        if declared is None and comment.strip().startswith("n"):
            key, _, value = comment.strip().partition("=")
            if key.strip() == "n" and value.strip().isdigit():
                declared = int(value)
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2 or not all(p.isdigit() for p in parts):
            raise GraphError(f"line {lineno}: expected two non-negative integers, got {raw!r}")
        u, v = int(parts[0]), int(parts[1])
        if u == v:
            raise GraphError(f"line {lineno}: self-loop at {u}")
        edges.append((u, v))
    if declared is None:
        if not edges:
            raise GraphError("empty edge list without a node count")
        declared = 1 + max(max(e) for e in edges)
    return Graph.from_edges(declared, edges)


def write_edge_list(g: Graph) -> str:
    lines = [f"# n = {g.n}"]
    lines += [f"{u} {v}" for u, v in g.edges()]
    return "\n".join(lines) + "\n"


def graph_to_json(g: Graph) -> dict:
    return {"n": g.n, "edges": [list(e) for e in g.edges()]}


def graph_from_json(obj: Mapping | str) -> Graph:
    if isinstance(obj, str):
        obj = json.loads(obj)
    return Graph.from_edges(int(obj["n"]), [tuple(e) for e in obj["edges"]])
