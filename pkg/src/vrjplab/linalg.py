"""Dense symmetric linear algebra: PD inverses, Schur block inversion and
H-connectivity on the support of a matrix."""

from __future__ import annotations

from collections import deque

import numpy as np
from scipy import linalg as sla

from .stats import TestReport

__all__ = [
    "NotPositiveDefiniteError",
    "SymMatrix",
    "ZERO_TOL_SAMPLED",
    "invert_pd",
    "invert_pd_batch",
    "is_pd",
    "block_inverse",
    "h_connected",
    "h_components",
    "green_positivity_check",
    "neumann_partial_sums",
]

ZERO_TOL_SAMPLED = 1e-12
RESIDUAL_TOL = 1e-8


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """The matrix handed to a PD routine failed its Cholesky factorization."""


class SymMatrix(np.ndarray):
    """Square ndarray symmetrized from its lower triangle on construction."""

    def __new__(cls, entries):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        lower = np.tril(a)
        a = lower + np.tril(a, -1).T
        return a.view(cls)

    @property
    def dimension(self) -> int:
        return self.shape[0]


def _as_square(h) -> np.ndarray:
    a = np.asarray(h, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return a


def invert_pd(h, check: bool = True) -> np.ndarray:
    """Inverse of a symmetric positive-definite matrix via Cholesky."""
    a = _as_square(h)
    n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    try:
        c = sla.cho_factor(a, lower=True, check_finite=True)
    except sla.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc
    g = sla.cho_solve(c, np.eye(n))
    g = 0.5 * (g + g.T)
    if check:
        resid = np.abs(a @ g - np.eye(n)).max()
        # ill-conditioned inputs get the residual floor their conditioning allows
        if resid > max(RESIDUAL_TOL, 100 * np.finfo(float).eps * np.linalg.cond(a)):
            raise NotPositiveDefiniteError(f"inverse residual {resid:.3g} too large")
    return g


def is_pd(h) -> bool:
    try:
        np.linalg.cholesky(np.asarray(h, dtype=float))
    except np.linalg.LinAlgError:
        return False
    return True


def invert_pd_batch(h) -> np.ndarray:
    """Inverse of a stack ``(..., n, n)`` of PD matrices.

    Raises :class:`NotPositiveDefiniteError` if any member is not PD.
    """
    a = np.asarray(h, dtype=float)
    if a.shape[-1] == 0:
        return np.zeros_like(a)
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc
    g = np.linalg.inv(a)
    return 0.5 * (g + np.swapaxes(g, -1, -2))


def block_inverse(h, split: int) -> np.ndarray:
    """Inverse through the Schur complement of the leading ``split`` block.

    With ``h = [[A, B], [B^T, C]]`` and ``S = C - B^T A^{-1} B``::

        h^{-1} = [[A^{-1} + A^{-1} B S^{-1} B^T A^{-1},  -A^{-1} B S^{-1}],
                  [-S^{-1} B^T A^{-1},                    S^{-1}        ]]
    """
    a = _as_square(h)
    n = a.shape[0]
    if not 0 < split < n:
        raise ValueError(f"split must lie strictly between 0 and {n}")
    A, B, C = a[:split, :split], a[:split, split:], a[split:, split:]
    try:
        fa = sla.cho_factor(A, lower=True)
        a_inv_b = sla.cho_solve(fa, B)
        fs = sla.cho_factor(C - B.T @ a_inv_b, lower=True)
    except sla.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"block or Schur complement not PD: {exc}") from exc
    s_inv = sla.cho_solve(fs, np.eye(n - split))
    top_right = -a_inv_b @ s_inv
    out = np.empty_like(a)
    out[:split, :split] = sla.cho_solve(fa, np.eye(split)) - top_right @ a_inv_b.T
    out[:split, split:] = top_right
    out[split:, :split] = top_right.T
    out[split:, split:] = s_inv
    out = 0.5 * (out + out.T)
    return out


def h_components(h, tol: float = 0.0) -> np.ndarray:
    """Component label per index for the graph ``{|h(i,j)| > tol, i != j}``."""
    a = _as_square(h)
    n = a.shape[0]
    support = np.abs(a) > tol
    np.fill_diagonal(support, False)
    labels = np.full(n, -1, dtype=int)
    comp = 0
    for s in range(n):
        if labels[s] >= 0:
            continue
        labels[s] = comp
        queue = deque([s])
        while queue:
            x = queue.popleft()
            for y in np.flatnonzero(support[x]):
                if labels[y] < 0:
                    labels[y] = comp
                    queue.append(y)
        comp += 1
    return labels


def h_connected(h, i: int, j: int, tol: float = 0.0) -> bool:
    """True iff ``i`` and ``j`` are joined by a path of nonzero off-diagonal entries.

    An index is taken to be connected to itself.
    """
    if i == j:
        return True
    labels = h_components(h, tol)
    return bool(labels[i] == labels[j])


def green_positivity_check(h, tol: float = ZERO_TOL_SAMPLED) -> TestReport:
    """Check ``h^{-1}(i,j) > 0`` exactly on H-connected pairs for a PD M-matrix."""
    a = _as_square(h)
    off = a - np.diag(np.diag(a))
    if (off > 0).any():
        raise ValueError("expected non-positive off-diagonal entries (M-matrix)")
    g = invert_pd(a)
    labels = h_components(a, tol)
    connected = labels[:, None] == labels[None, :]
    positive = g > tol
    mismatches = int((positive != connected).sum())
    return TestReport(
        "green_positivity", float(mismatches), 0.0, mismatches == 0 and bool((g > -tol).all()),
        params={"dimension": a.shape[0]},
        details={"min_connected_entry": float(g[connected].min()),
                 "max_abs_disconnected_entry": float(np.abs(g[~connected]).max()) if (~connected).any() else 0.0},
    )


def neumann_partial_sums(h, terms: int) -> np.ndarray:
    """Partial sums ``(1/L) sum_{k<=K} (I - h/L)^k`` for ``K = 0..terms-1``,
    ``L`` the top eigenvalue; they increase entrywise to ``h^{-1}`` for a PD
    M-matrix."""
    a = _as_square(h)
    n = a.shape[0]
    lam = np.linalg.eigvalsh(a)[-1]
    step = np.eye(n) - a / lam
    power = np.eye(n)
    acc = np.zeros_like(a)
    out = np.empty((terms, n, n))
    for k in range(terms):
        acc = acc + power
        out[k] = acc / lam
        power = power @ step
    return out
