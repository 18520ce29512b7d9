"""Trajectory simulators for the ERRW, the VRJP, the ERRW written as a
VRJP with Gamma weights, and the walk in beta-field conductances.

Every model has a batched path sampler (``*_paths``) that advances many
independent replicates at once; the single-trajectory functions are thin
wrappers around them.  The VRJP started at ``x0`` jumps from ``x`` to a
neighbour ``y`` at rate ``W_xy (1 + l_y(t))`` with ``l_y`` the time spent at
``y`` so far.  While the walk sits at ``x`` none of those rates move, so each
holding time is exponential and the target is a weighted choice.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .betafield import sample_beta
from .graphs import WeightedGraph
from .linalg import invert_pd_batch

__all__ = [
    "Trajectory",
    "NeighborTable",
    "simulate_errw",
    "simulate_vrjp",
    "errw_via_vrjp",
    "rw_conductances",
    "conductances_from_beta",
    "errw_paths",
    "vrjp_paths",
    "errw_via_vrjp_paths",
    "conductance_walk_paths",
    "beta_walk_paths",
    "path_distribution",
    "merge_counts",
]


@dataclass(frozen=True)
class Trajectory:
    """A walk's vertex sequence, jump times and per-vertex local times.

    Discrete walks have no ``jump_times``; their local times count one unit
    per step spent at a vertex.
    """

    vertices: np.ndarray
    jump_times: np.ndarray
    local_times: np.ndarray

    @property
    def n_steps(self) -> int:
        return len(self.vertices) - 1

    @property
    def final_time(self) -> float:
        return float(self.jump_times[-1]) if len(self.jump_times) else float(self.n_steps)


@dataclass(frozen=True)
class NeighborTable:
    """Padded adjacency: row ``x`` lists neighbours and edge ids of ``x``."""

    nbr: np.ndarray
    eid: np.ndarray
    mask: np.ndarray

    @classmethod
    def of(cls, g: WeightedGraph) -> "NeighborTable":
        index = {e: i for i, e in enumerate(g.edges)}
        width = max(len(g.neighbors(v)) for v in range(g.n_vertices))
        nbr = np.zeros((g.n_vertices, width), dtype=np.intp)
        eid = np.zeros((g.n_vertices, width), dtype=np.intp)
        mask = np.zeros((g.n_vertices, width), dtype=bool)
        for x in range(g.n_vertices):
            for k, y in enumerate(g.neighbors(x)):
                nbr[x, k] = y
                eid[x, k] = index[(min(x, y), max(x, y))]
                mask[x, k] = True
        return cls(nbr, eid, mask)


def _edge_values(g: WeightedGraph, values, name: str) -> np.ndarray:
    """Scalar, per-edge vector or per-replicate ``(size, n_edges)`` array."""
    if values is None:
        return np.asarray(g.weights, dtype=float)
    v = np.asarray(values, dtype=float)
    if v.ndim == 0:
        v = np.full(g.n_edges, float(v))
    if v.shape[-1] != g.n_edges:
        raise ValueError(f"{name} needs one value per edge ({g.n_edges})")
    if (v <= 0).any():
        raise ValueError(f"{name} must be positive")
    return v


def _choose(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Row-wise categorical draw; zero-weight padding is never picked."""
    cum = np.cumsum(weights, axis=1)
    u = rng.random(len(weights)) * cum[:, -1]
    k = (cum <= u[:, None]).sum(axis=1)
    return np.minimum(k, weights.shape[1] - 1)


def _check_start(g: WeightedGraph, x0: int, steps: int):
    if not 0 <= x0 < g.n_vertices:
        raise ValueError(f"start vertex {x0} out of range")
    if steps < 0:
        raise ValueError("number of steps must be non-negative")
    if g.n_vertices < 2 and steps > 0:
        raise ValueError("a single vertex has nowhere to go")


def errw_paths(g: WeightedGraph, a, x0: int, steps: int, size: int,
               rng: np.random.Generator) -> np.ndarray:
    """``(size, steps + 1)`` ERRW vertex sequences.

    From ``x`` the walk crosses edge ``e`` with probability proportional to
    ``a_e`` plus the number of earlier crossings of ``e`` in either direction.
    """
    _check_start(g, x0, steps)
    a = _edge_values(g, a, "initial weights")
    table = NeighborTable.of(g)
    rows = np.arange(size)
    counts = np.zeros((size, g.n_edges))
    paths = np.empty((size, steps + 1), dtype=np.intp)
    paths[:, 0] = x = np.full(size, x0, dtype=np.intp)
    for t in range(steps):
        eid = table.eid[x]
        w = np.where(table.mask[x], np.broadcast_to(a, counts.shape)[rows[:, None], eid]
                     + counts[rows[:, None], eid], 0.0)
        k = _choose(w, rng)
        counts[rows, eid[rows, k]] += 1.0
        x = table.nbr[x, k]
        paths[:, t + 1] = x
    return paths


def vrjp_paths(g: WeightedGraph, w, x0: int, steps: int, size: int,
               rng: np.random.Generator):
    """Batched VRJP: ``(paths, jump_times, local_times)``.

    ``w`` may differ per replicate (shape ``(size, n_edges)``).  Shapes are
    ``(size, steps+1)``, ``(size, steps)`` and ``(size, n_vertices)``.
    """
    _check_start(g, x0, steps)
    w = np.broadcast_to(_edge_values(g, w, "weights"), (size, g.n_edges))
    table = NeighborTable.of(g)
    rows = np.arange(size)
    local = np.zeros((size, g.n_vertices))
    times = np.empty((size, steps))
    paths = np.empty((size, steps + 1), dtype=np.intp)
    paths[:, 0] = x = np.full(size, x0, dtype=np.intp)
    clock = np.zeros(size)
    for t in range(steps):
        nb = table.nbr[x]
        rates = np.where(table.mask[x],
                         w[rows[:, None], table.eid[x]] * (1.0 + local[rows[:, None], nb]), 0.0)
        hold = rng.standard_exponential(size) / rates.sum(axis=1)
        local[rows, x] += hold
        clock += hold
        times[:, t] = clock
        x = nb[rows, _choose(rates, rng)]
        paths[:, t + 1] = x
    return paths, times, local


def errw_via_vrjp_paths(g: WeightedGraph, a, x0: int, steps: int, size: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Skeletons of VRJPs run with independent weights ``W_e ~ Gamma(a_e, 1)``."""
    a = _edge_values(g, a, "initial weights")
    w = rng.gamma(np.broadcast_to(a, (size, g.n_edges)))
    return vrjp_paths(g, w, x0, steps, size, rng)[0]


def conductance_walk_paths(g: WeightedGraph, c, x0: int, steps: int, size: int,
                           rng: np.random.Generator) -> np.ndarray:
    """Reversible walk, ``P(x -> y) = c_xy / sum_z c_xz``; ``c`` may vary per replicate."""
    _check_start(g, x0, steps)
    c = np.broadcast_to(_edge_values(g, c, "conductances"), (size, g.n_edges))
    table = NeighborTable.of(g)
    rows = np.arange(size)
    paths = np.empty((size, steps + 1), dtype=np.intp)
    paths[:, 0] = x = np.full(size, x0, dtype=np.intp)
    for t in range(steps):
        p = np.where(table.mask[x], c[rows[:, None], table.eid[x]], 0.0)
        x = table.nbr[x, _choose(p, rng)]
        paths[:, t + 1] = x
    return paths


def conductances_from_beta(g: WeightedGraph, green, x0: int, w=None) -> np.ndarray:
    """``c_xy = W_xy G(x0, x) G(x0, y)`` per edge (batched over ``green``)."""
    u, v, gw = g.edge_array()
    w = gw if w is None else _edge_values(g, w, "weights")
    green = np.asarray(green, dtype=float)
    row = green[..., x0, :]
    return w * row[..., u] * row[..., v]


def beta_walk_paths(g: WeightedGraph, x0: int, steps: int, size: int,
                    rng: np.random.Generator, w=None) -> np.ndarray:
    """Walks in the conductances of a fresh beta-field (``eta = 0``) per replicate."""
    u, v, gw = g.edge_array()
    w = gw if w is None else _edge_values(g, w, "weights")
    wm = np.zeros((g.n_vertices, g.n_vertices))
    wm[u, v] = wm[v, u] = w
    green = invert_pd_batch(sample_beta(wm, None, rng, size=size).h())
    c = conductances_from_beta(g, green, x0, w)
    return conductance_walk_paths(g, c, x0, steps, size, rng)


def _discrete(path: np.ndarray, n_vertices: int) -> Trajectory:
    local = np.bincount(path[:-1], minlength=n_vertices).astype(float)
    return Trajectory(path, np.empty(0), local)


def simulate_errw(g: WeightedGraph, a, x0: int, steps: int, rng: np.random.Generator) -> Trajectory:
    return _discrete(errw_paths(g, a, x0, steps, 1, rng)[0], g.n_vertices)


def simulate_vrjp(g: WeightedGraph, w, x0: int, n_jumps: int, rng: np.random.Generator) -> Trajectory:
    """One VRJP run stopped at its ``n_jumps``-th jump; ``w=None`` uses the graph weights."""
    paths, times, local = vrjp_paths(g, w, x0, n_jumps, 1, rng)
    return Trajectory(paths[0], times[0], local[0])


def errw_via_vrjp(g: WeightedGraph, a, x0: int, steps: int, rng: np.random.Generator) -> Trajectory:
    a = _edge_values(g, a, "initial weights")
    w = rng.gamma(a)
    return simulate_vrjp(g, w, x0, steps, rng)


def rw_conductances(g: WeightedGraph, c, x0: int, steps: int, rng: np.random.Generator) -> Trajectory:
    return _discrete(conductance_walk_paths(g, c, x0, steps, 1, rng)[0], g.n_vertices)


def path_distribution(sampler: Callable[[np.random.Generator, int, int], np.ndarray], k: int,
                      n: int, rng: np.random.Generator) -> Counter:
    """Counts of the length-``k`` paths returned by ``sampler(rng, n, k)``."""
    paths = np.asarray(sampler(rng, n, k))
    if paths.shape != (n, k + 1):
        raise ValueError(f"sampler must return an array of shape ({n}, {k + 1})")
    rows, counts = np.unique(paths, axis=0, return_counts=True)
    return Counter({tuple(int(v) for v in r): int(c) for r, c in zip(rows, counts)})


def merge_counts(parts: Sequence[Counter]) -> Counter:
    out: Counter = Counter()
    for p in parts:
        out.update(p)
    return out
