"""The beta-field law nu_n^{W,eta}: density, exact sampling and the
associated random Schrodinger operator ``H = 2 diag(beta) - W``.

Sampling eliminates one vertex at a time.  The pivot's marginal is one
dimensional: with ``c`` its current self-weight and ``eta_hat`` its
effective source (own eta plus total weight to the remaining vertices),
``h = 2 beta - c`` has density proportional to
``h^{-1/2} exp(-(h + eta_hat^2 / h) / 2)``.  Conditioning on it adds the
rank-one correction ``W[:, v] W[v, :] / h`` to the remaining weights and
``W[:, v] eta[v] / h`` to their sources.  The pivots ``h`` are exactly the
Cholesky pivots of ``H``, so ``det H`` is their product.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .linalg import NotPositiveDefiniteError, invert_pd_batch

__all__ = [
    "BetaSample",
    "EliminationStep",
    "nu_log_density",
    "sample_gig_half",
    "sample_beta",
    "h_from_beta",
    "green",
    "elimination_steps",
]

_LOG_2_OVER_PI = np.log(2.0 / np.pi)


def _check_weights(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim < 2 or w.shape[-1] != w.shape[-2]:
        raise ValueError(f"weight matrix must be square, got shape {w.shape}")
    if (w < 0).any():
        raise ValueError("weights must be non-negative")
    if not np.allclose(w, np.swapaxes(w, -1, -2)):
        raise ValueError("weight matrix must be symmetric")
    return w


def h_from_beta(w, beta) -> np.ndarray:
    """``H(i,i) = 2 beta_i - W(i,i)``, ``H(i,j) = -W(i,j)``; batches broadcast."""
    w = np.asarray(w, dtype=float)
    beta = np.asarray(beta, dtype=float)
    h = -np.broadcast_to(w, beta.shape[:-1] + w.shape[-2:]).copy()
    idx = np.arange(beta.shape[-1])
    h[..., idx, idx] += 2.0 * beta
    return h


def green(h) -> np.ndarray:
    """Green matrix ``G = H^{-1}``.  A PD failure here is a sampler bug."""
    return invert_pd_batch(h)


def nu_log_density(w, eta, beta) -> float:
    """Log-density of nu_n^{W,eta} at ``beta``, normalized by ``(2/pi)^{n/2}``.

    Returns ``-inf`` off the support ``{H_beta > 0}``.
    """
    w = _check_weights(w)
    beta = np.asarray(beta, dtype=float)
    n = beta.shape[-1]
    eta = np.zeros(n) if eta is None else np.asarray(eta, dtype=float)
    if w.shape != (n, n) or eta.shape != (n,):
        raise ValueError("dimension mismatch between W, eta and beta")
    h = h_from_beta(w, beta)
    try:
        chol = np.linalg.cholesky(h)
    except np.linalg.LinAlgError:
        return -np.inf
    log_det = 2.0 * np.log(np.diag(chol)).sum()
    y = np.linalg.solve(chol, eta)
    quad = h.sum() + y @ y - 2.0 * eta.sum()
    return float(0.5 * n * _LOG_2_OVER_PI - 0.5 * quad - 0.5 * log_det)


def sample_gig_half(rate, inv_coeff, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw ``h`` with density proportional to ``h^{-1/2} exp(-(rate h + inv_coeff / h) / 2)``.

    The reciprocal ``1/h`` is inverse Gaussian with mean ``sqrt(rate/inv_coeff)``
    and shape ``rate``; it is drawn with the Michael-Schucany-Haas root
    selection written so that ``inv_coeff -> 0`` degrades smoothly to the
    ``Gamma(1/2, rate/2)`` limit, which is used exactly when ``inv_coeff == 0``.
    """
    rate = np.asarray(rate, dtype=float)
    b = np.asarray(inv_coeff, dtype=float)
    if (rate <= 0).any() or (b < 0).any():
        raise ValueError("need rate > 0 and inv_coeff >= 0")
    if size is None:
        size = np.broadcast_shapes(rate.shape, b.shape)
    rate = np.broadcast_to(rate, size)
    b = np.broadcast_to(b, size)
    s = rng.standard_normal(size) ** 2
    u = rng.random(size)

    gamma_case = b == 0
    mu = np.sqrt(rate / np.where(gamma_case, 1.0, b))
    r = mu * s / (2.0 * rate)
    q = 1.0 + r + np.sqrt(r * (r + 2.0))
    # large root with probability q / (q + 1), small root otherwise
    h = np.where(u * (q + 1.0) <= q, q / mu, 1.0 / (mu * q))
    h = np.where(gamma_case, s / rate, h)
    return h if np.ndim(h) else float(h)


@dataclass(frozen=True)
class BetaSample:
    """One or many (leading axis) beta-field draws against weights ``w``."""

    beta: np.ndarray
    w: np.ndarray
    pivots: np.ndarray | None = None

    @property
    def n_vertices(self) -> int:
        return self.beta.shape[-1]

    def h(self) -> np.ndarray:
        return h_from_beta(self.w, self.beta)

    def green(self) -> np.ndarray:
        return green(self.h())

    def log_det(self) -> np.ndarray:
        if self.pivots is not None:
            return np.log(self.pivots).sum(axis=-1)
        return np.linalg.slogdet(self.h())[1]


@dataclass(frozen=True)
class EliminationStep:
    pivot: int
    self_weight: float
    eta_eff: float
    schur_update: np.ndarray


def sample_beta(w, eta=None, rng: np.random.Generator | None = None, size: int | None = None,
                order: Sequence[int] | None = None) -> BetaSample:
    """Exact draw(s) from nu_n^{W,eta} by sequential vertex elimination.

    ``w`` may be a single ``(n, n)`` matrix or a stack ``(size, n, n)``
    (one weight matrix per replicate); ``eta`` likewise ``(n,)`` or
    ``(size, n)``.  With ``size=None`` and unbatched inputs one draw is made
    and ``beta`` has shape ``(n,)``.
    """
    if rng is None:
        rng = np.random.default_rng()
    w = _check_weights(w)
    n = w.shape[-1]
    eta = np.zeros(n) if eta is None else np.asarray(eta, dtype=float)
    if eta.shape[-1] != n:
        raise ValueError("dimension mismatch between W and eta")
    if (eta < 0).any():
        raise ValueError("eta must be non-negative")
    batch_shape = np.broadcast_shapes(w.shape[:-2], eta.shape[:-1])
    squeeze = size is None and batch_shape == ()
    m = size if size is not None else (int(np.prod(batch_shape)) if batch_shape else 1)
    if batch_shape not in ((), (m,)):
        raise ValueError(f"batched inputs must have leading size {m}")

    perm = np.arange(n) if order is None else np.asarray(order, dtype=int)
    if sorted(perm.tolist()) != list(range(n)):
        raise ValueError("order must be a permutation of the vertices")
    wc = np.broadcast_to(w, (m, n, n))[:, perm][:, :, perm].copy()
    ec = np.broadcast_to(eta, (m, n))[:, perm].copy()

    pivots = np.empty((m, n))
    beta_perm = np.empty((m, n))
    for k in range(n):
        col = wc[:, k + 1:, k]
        eta_hat = ec[:, k] + col.sum(axis=1)
        h = sample_gig_half(1.0, eta_hat**2, rng, size=m)
        pivots[:, k] = h
        beta_perm[:, k] = 0.5 * (h + wc[:, k, k])
        if k + 1 < n:
            scaled = col / h[:, None]
            wc[:, k + 1:, k + 1:] += scaled[:, :, None] * col[:, None, :]
            ec[:, k + 1:] += scaled * ec[:, k:k + 1]

    beta = np.empty_like(beta_perm)
    beta[:, perm] = beta_perm
    piv = np.empty_like(pivots)
    piv[:, perm] = pivots
    if squeeze:
        beta, piv = beta[0], piv[0]
    return BetaSample(beta, w, piv)


def elimination_steps(w, eta, beta, order: Sequence[int] | None = None) -> Iterator[EliminationStep]:
    """Replay the elimination for a fixed ``beta`` (single draw).

    Yields each pivot's accumulated self-weight and effective source; a
    non-positive pivot means ``beta`` is off the support.
    """
    w = _check_weights(w)
    n = w.shape[0]
    eta = np.zeros(n) if eta is None else np.asarray(eta, dtype=float)
    beta = np.asarray(beta, dtype=float)
    perm = list(range(n)) if order is None else list(order)
    wc = w[np.ix_(perm, perm)].copy()
    ec = eta[perm].copy()
    bp = beta[perm]
    for k, v in enumerate(perm):
        col = wc[k + 1:, k]
        h = 2.0 * bp[k] - wc[k, k]
        if h <= 0:
            raise NotPositiveDefiniteError(f"pivot at vertex {v} is {h:.3g}")
        update = np.outer(col, col) / h
        yield EliminationStep(v, float(wc[k, k]), float(ec[k] + col.sum()), update)
        wc[k + 1:, k + 1:] += update
        ec[k + 1:] += col * ec[k] / h
