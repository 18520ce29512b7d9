"""Finite weighted graphs, vertex-set quotients and ball quotients.

Vertices are dense integers ``0..n-1``.  A quotient keeps the surviving
vertices in their original relative order and appends the merged vertex
with the largest id, so downstream matrix indexing stays predictable.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "GraphError",
    "WeightedGraph",
    "QuotientResult",
    "MAX_VERTICES",
    "build_graph",
    "quotient",
    "ball_quotient",
    "lattice_box",
    "weight_matrix",
    "graph_distances",
    "read_edge_list",
    "write_edge_list",
    "parse_lattice_spec",
]

MAX_VERTICES = 20_000


class GraphError(ValueError):
    """Raised for malformed graphs or invalid quotient requests."""


@dataclass(frozen=True)
class WeightedGraph:
    n_vertices: int
    edges: tuple[tuple[int, int], ...]
    weights: tuple[float, ...]
    _adjacency: tuple[tuple[tuple[int, float], ...], ...] = field(
        default=(), repr=False, compare=False
    )

    def __post_init__(self):
        adj: list[list[tuple[int, float]]] = [[] for _ in range(self.n_vertices)]
        for (u, v), w in zip(self.edges, self.weights):
            adj[u].append((v, w))
            adj[v].append((u, w))
        object.__setattr__(
            self, "_adjacency", tuple(tuple(sorted(a)) for a in adj)
        )

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, v: int) -> tuple[int, ...]:
        return tuple(u for u, _ in self._adjacency[v])

    def incident(self, v: int) -> tuple[tuple[int, float], ...]:
        """``(neighbor, weight)`` pairs around ``v``, sorted by neighbor."""
        return self._adjacency[v]

    def weight(self, u: int, v: int) -> float:
        for x, w in self._adjacency[u]:
            if x == v:
                return w
        return 0.0

    def degree(self, v: int) -> float:
        """Weighted degree."""
        return float(sum(w for _, w in self._adjacency[v]))

    def weight_matrix(self) -> np.ndarray:
        return weight_matrix(self)

    def with_weights(self, weights: Sequence[float] | float) -> "WeightedGraph":
        """Same topology, new edge weights (a scalar sets every edge)."""
        if np.isscalar(weights):
            weights = [float(weights)] * self.n_edges
        if len(weights) != self.n_edges:
            raise GraphError("one weight per edge required")
        return build_graph(
            self.n_vertices, [(u, v, w) for (u, v), w in zip(self.edges, weights)]
        )

    def edge_array(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        e = np.asarray(self.edges, dtype=np.intp).reshape(-1, 2)
        return e[:, 0], e[:, 1], np.asarray(self.weights, dtype=float)


@dataclass(frozen=True)
class QuotientResult:
    graph: WeightedGraph
    merged_vertex: int
    projection: tuple[int, ...]


def build_graph(n: int, weighted_edges: Iterable[tuple[int, int, float]]) -> WeightedGraph:
    """Validate an edge list and return a connected :class:`WeightedGraph`.

    Edges are stored with ``u < v`` in lexicographic order.
    """
    n = int(n)
    if n < 1:
        raise GraphError("graph needs at least one vertex")
    if n > MAX_VERTICES:
        raise GraphError(f"{n} vertices exceeds the configured maximum {MAX_VERTICES}")
    seen: dict[tuple[int, int], float] = {}
    for u, v, w in weighted_edges:
        u, v, w = int(u), int(v), float(w)
        if not (0 <= u < n and 0 <= v < n):
            raise GraphError(f"edge ({u}, {v}) out of range for {n} vertices")
        if u == v:
            raise GraphError(f"self-loop at vertex {u}")
        if not (w > 0 and np.isfinite(w)):
            raise GraphError(f"non-positive weight {w} on edge ({u}, {v})")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise GraphError(f"duplicate edge {key}")
        seen[key] = w
    keys = sorted(seen)
    g = WeightedGraph(n, tuple(keys), tuple(seen[k] for k in keys))
    if n > 1 and len(_bfs(g, 0)) != n:
        raise GraphError("graph is disconnected")
    return g


def _bfs(g: WeightedGraph, source: int) -> dict[int, int]:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        x = queue.popleft()
        for y in g.neighbors(x):
            if y not in dist:
                dist[y] = dist[x] + 1
                queue.append(y)
    return dist


def graph_distances(g: WeightedGraph, source: int) -> np.ndarray:
    """Hop distances from ``source`` (graph is connected, so all finite)."""
    d = _bfs(g, source)
    return np.array([d[v] for v in range(g.n_vertices)], dtype=int)


def weight_matrix(g: WeightedGraph) -> np.ndarray:
    w = np.zeros((g.n_vertices, g.n_vertices))
    for (u, v), x in zip(g.edges, g.weights):
        w[u, v] = w[v, u] = x
    return w


def quotient(g: WeightedGraph, a_set: Iterable[int]) -> QuotientResult:
    """Fuse ``a_set`` into a single vertex.

    Edges inside the set vanish; an edge from the merged vertex to ``y``
    carries the total weight of the original edges between the set and ``y``.
    """
    a = set(int(x) for x in a_set)
    if not a:
        raise GraphError("cannot quotient by an empty set")
    if any(not 0 <= x < g.n_vertices for x in a):
        raise GraphError("quotient set contains unknown vertices")
    if len(a) == g.n_vertices:
        raise GraphError("quotient set must be a proper subset of the vertices")
    kept = [v for v in range(g.n_vertices) if v not in a]
    merged = len(kept)
    proj = [merged] * g.n_vertices
    for new, old in enumerate(kept):
        proj[old] = new

    acc: dict[tuple[int, int], float] = {}
    for (u, v), w in zip(g.edges, g.weights):
        pu, pv = proj[u], proj[v]
        if pu == pv:
            continue
        key = (min(pu, pv), max(pu, pv))
        acc[key] = acc.get(key, 0.0) + w
    h = build_graph(merged + 1, [(u, v, w) for (u, v), w in acc.items()])
    return QuotientResult(h, merged, tuple(proj))


def ball_quotient(g: WeightedGraph, x0: int, radius: int) -> QuotientResult:
    """Merge every vertex at hop distance ``>= radius`` from ``x0``."""
    if radius < 1:
        raise GraphError("radius must be at least 1")
    dist = graph_distances(g, x0)
    outside = np.flatnonzero(dist >= radius)
    if outside.size == 0:
        raise GraphError(
            f"ball of radius {radius} around {x0} covers the whole graph"
        )
    return quotient(g, outside.tolist())


def lattice_box(d: int, side: int, w: float = 1.0) -> WeightedGraph:
    """Box ``{0..side-1}^d`` with nearest-neighbour edges, row-major ids."""
    if d < 1 or side < 2:
        raise GraphError("lattice box needs d >= 1 and side >= 2")
    if side**d > MAX_VERTICES:
        raise GraphError(
            f"side^d = {side}^{d} exceeds the configured maximum {MAX_VERTICES}"
        )
    shape = (side,) * d
    strides = [side ** (d - 1 - k) for k in range(d)]
    edges = []
    for coord in itertools.product(range(side), repeat=d):
        idx = sum(c * s for c, s in zip(coord, strides))
        for k in range(d):
            if coord[k] + 1 < shape[k]:
                edges.append((idx, idx + strides[k], w))
    return build_graph(side**d, edges)


def read_edge_list(path: str | Path, n_vertices: int | None = None) -> WeightedGraph:
    """Parse ``u v w`` lines; ``#`` starts a comment line."""
    edges = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise GraphError(f"{path}:{lineno}: expected 'u v w', got {line!r}")
        edges.append((int(parts[0]), int(parts[1]), float(parts[2])))
    if n_vertices is None:
        n_vertices = 1 + max((max(u, v) for u, v, _ in edges), default=0)
    return build_graph(n_vertices, edges)


def write_edge_list(g: WeightedGraph, path: str | Path) -> None:
    lines = [f"# {g.n_vertices} vertices, {g.n_edges} edges"]
    lines += [f"{u} {v} {w:.17g}" for (u, v), w in zip(g.edges, g.weights)]
    Path(path).write_text("\n".join(lines) + "\n")


def parse_lattice_spec(spec: str) -> WeightedGraph:
    """``"d,L,w"`` -> :func:`lattice_box`."""
    try:
        d, side, w = spec.split(",")
        return lattice_box(int(d), int(side), float(w))
    except ValueError as exc:
        raise GraphError(f"bad lattice spec {spec!r}: {exc}") from exc
