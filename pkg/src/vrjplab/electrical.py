"""Effective conductance, the beta-field effective weight and the
two-point ratio ``G(x0, d) / G(d, d)`` with its inverse-Gaussian law."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla
from scipy import stats

from .graphs import WeightedGraph
from .linalg import invert_pd

__all__ = [
    "PotentialSolution",
    "RECURRENCE_EPS",
    "solve_potential",
    "effective_conductance",
    "effective_weight",
    "effective_weight_schur",
    "psi_ratio",
    "z_law_density",
    "z_law_cdf",
    "laplacian",
]

RECURRENCE_EPS = 1e-3  # display label threshold for psi in reports


@dataclass(frozen=True)
class PotentialSolution:
    """Unit-potential solution: ``V(x0) = 1``, ``V(delta) = 0``, harmonic elsewhere."""

    potential: np.ndarray
    energy: float
    c_eff: float
    residual: float


def _conductances(g: WeightedGraph, c) -> np.ndarray:
    if c is None:
        return np.asarray(g.weights, dtype=float)
    c = np.asarray(c, dtype=float)
    if c.ndim == 0:
        c = np.full(g.n_edges, float(c))
    if c.shape != (g.n_edges,):
        raise ValueError(f"need one conductance per edge ({g.n_edges})")
    if (c <= 0).any():
        raise ValueError("conductances must be positive")
    return c


def laplacian(g: WeightedGraph, c=None) -> np.ndarray:
    c = _conductances(g, c)
    u, v, _ = g.edge_array()
    lap = np.zeros((g.n_vertices, g.n_vertices))
    np.add.at(lap, (u, v), -c)
    np.add.at(lap, (v, u), -c)
    np.add.at(lap, (u, u), c)
    np.add.at(lap, (v, v), c)
    return lap


def solve_potential(g: WeightedGraph, c, x0: int, delta: int) -> PotentialSolution:
    if x0 == delta:
        raise ValueError("x0 and delta must differ")
    c = _conductances(g, c)
    lap = laplacian(g, c)
    interior = np.array([v for v in range(g.n_vertices) if v not in (x0, delta)], dtype=np.intp)
    pot = np.zeros(g.n_vertices)
    pot[x0] = 1.0
    if interior.size:
        rhs = -lap[interior, x0]
        pot[interior] = sla.solve(lap[np.ix_(interior, interior)], rhs, assume_a="pos")
    resid = float(np.abs(lap[interior] @ pot).max()) if interior.size else 0.0
    u, v, _ = g.edge_array()
    energy = float((c * (pot[u] - pot[v]) ** 2).sum())
    c_eff = float(lap[x0] @ pot)
    return PotentialSolution(pot, energy, c_eff, resid)


def effective_conductance(g: WeightedGraph, c, x0: int, delta: int) -> float:
    """Two-point conductance between ``x0`` and ``delta``; ``c=None`` uses the graph weights."""
    return solve_potential(g, c, x0, delta).c_eff


def effective_weight(green, x: int, y: int):
    """``G(x,y) / (G(x,x) G(y,y) - G(x,y)^2)``, batched over leading axes."""
    if x == y:
        raise ValueError("x and y must differ")
    g = np.asarray(green, dtype=float)
    gxy, gxx, gyy = g[..., x, y], g[..., x, x], g[..., y, y]
    den = gxx * gyy - gxy**2
    if (den <= 0).any():
        raise FloatingPointError("non-positive 2x2 Green determinant")
    return gxy / den


def effective_weight_schur(w, h, x: int, y: int) -> float:
    """``W_xy + (W_{V1 V2} (H^{V2})^{-1} W_{V2 V1})(x, y)`` with ``V1 = {x, y}``."""
    if x == y:
        raise ValueError("x and y must differ")
    w = np.asarray(w, dtype=float)
    h = np.asarray(h, dtype=float)
    rest = [v for v in range(h.shape[0]) if v not in (x, y)]
    if not rest:
        return float(w[x, y])
    a = invert_pd(h[np.ix_(rest, rest)])
    return float(w[x, y] + w[x, rest] @ a @ w[rest, y])


def psi_ratio(green, x0: int, delta: int):
    """``G(x0, delta) / G(delta, delta)`` (batched)."""
    if x0 == delta:
        raise ValueError("x0 and delta must differ")
    g = np.asarray(green, dtype=float)
    return g[..., x0, delta] / g[..., delta, delta]


def z_law_density(w_eff, z):
    """``sqrt(w/2pi) z^{-3/2} exp(-(w/2)(sqrt z - 1/sqrt z)^2)``: inverse Gaussian, mean 1, shape ``w``."""
    z = np.asarray(z, dtype=float)
    w = np.asarray(w_eff, dtype=float)
    safe = np.where(z > 0, z, 1.0)
    val = np.sqrt(w / (2 * np.pi)) * safe**-1.5 * np.exp(-0.5 * w * (safe - 1.0) ** 2 / safe)
    return np.where(z > 0, val, 0.0)


def z_law_cdf(w_eff, z):
    w = np.asarray(w_eff, dtype=float)
    return stats.invgauss.cdf(z, mu=1.0 / w, scale=w)
