"""Monte-Carlo experiments and the test suite runner.

Every experiment takes a master ``seed`` and a ``threads`` count and draws
its replicates through :func:`replicate_map`, so its report depends on the
seed and parameters only.  Experiments return :class:`TestReport` objects
and never raise on a statistical failure.
"""

from __future__ import annotations

import json
import math
import time
import traceback
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import stats

from . import coupling as cp
from .betafield import sample_beta, sample_gig_half
from .electrical import (
    effective_conductance,
    effective_weight,
    effective_weight_schur,
    psi_ratio,
    z_law_cdf,
)
from .graphs import WeightedGraph, ball_quotient, build_graph, lattice_box
from .linalg import block_inverse, invert_pd, invert_pd_batch
from .processes import (
    beta_walk_paths,
    errw_paths,
    errw_via_vrjp_paths,
    merge_counts,
    path_distribution,
    vrjp_paths,
)
from .stats import (
    KS_ALPHA,
    McEstimate,
    TestReport,
    chi2_homogeneity,
    estimate,
    ks_1samp,
    ks_2samp,
    replicate_map,
    substream,
)

__all__ = [
    "ConfigError",
    "CouplingSetup",
    "CONVEX_FAMILY",
    "coupling_setup",
    "default_coupling_graph",
    "small_coupling_graph",
    "triple_identity_experiment",
    "change_of_variables_experiment",
    "block_inverse_experiment",
    "random_pd",
    "gamma_z_law_experiment",
    "tilted_marginal_experiment",
    "abs_u_experiment",
    "coupled_marginal_experiment",
    "psi_two_point_experiment",
    "psi_reduction_experiment",
    "gig_mean_experiment",
    "tilted_ratio_experiment",
    "martingale_experiment",
    "convex_order_experiment",
    "monotonicity_scan",
    "conductance_closed_forms",
    "eff_weight_experiment",
    "eff_weight_formula_experiment",
    "errw_equivalence_experiment",
    "vrjp_conductance_experiment",
    "negative_control",
    "default_suite_config",
    "load_suite_config",
    "run_suite",
    "TESTS",
]

MEAN_K = 3.0
ORDER_K = 2.0
COND_K = 4.0


class ConfigError(ValueError):
    """Invalid experiment or suite configuration."""


def _cat(parts):
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p) for p in zip(*parts))
    return np.concatenate(parts)


def _draw(fn: Callable[[np.random.Generator, int], object], n: int, seed: int, key: str,
          threads: int = 1):
    return _cat(replicate_map(fn, n, seed, key, threads))


def _positive(**counts):
    for name, v in counts.items():
        if int(v) < 1:
            raise ConfigError(f"{name} must be at least 1, got {v}")


def _combined(a: McEstimate, b: McEstimate) -> float:
    return math.hypot(a.stderr, b.stderr)


# --------------------------------------------------------------------------
# coupling setups: a graph on n + 2 vertices whose last two vertices are the
# endpoints of the modified edge


@dataclass(frozen=True)
class CouplingSetup:
    w_inner: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    w_minus: float
    w_plus: float
    x1: np.ndarray

    @property
    def n_inner(self) -> int:
        return self.w_inner.shape[0]

    def full_weights(self, w_edge: float) -> np.ndarray:
        n = self.n_inner
        w = np.zeros((n + 2, n + 2))
        w[:n, :n] = self.w_inner
        w[:n, n] = w[n, :n] = self.w1
        w[:n, n + 1] = w[n + 1, :n] = self.w2
        w[n, n + 1] = w[n + 1, n] = w_edge
        return w

    def inner_h(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Inner blocks drawn from their common marginal nu_n^{W, w1 + w2}."""
        return sample_beta(self.w_inner, self.w1 + self.w2, rng, size=size).h()

    def triples(self, rng: np.random.Generator, size: int, variant=None) -> cp.CoupledTriple:
        return cp.couple_triple(self.inner_h(rng, size), self.w1, self.w2, self.w_minus,
                                self.w_plus, self.x1, rng, variant=variant)


def coupling_setup(g: WeightedGraph, w_minus: float, w_plus: float, x1=None) -> CouplingSetup:
    """Split ``g`` into inner vertices ``0..n-1`` and the modified edge ``(n, n+1)``.

    Any existing weight on that edge is replaced by ``w_minus`` / ``w_plus``.
    ``x1`` defaults to the all-ones vector.
    """
    if g.n_vertices < 2:
        raise ConfigError("need at least the two endpoints of the modified edge")
    if not 0 <= w_minus <= w_plus:
        raise ConfigError("need 0 <= w_minus <= w_plus")
    w = g.weight_matrix()
    n = g.n_vertices - 2
    x1 = np.ones(n + 2) if x1 is None else np.asarray(x1, dtype=float)
    if x1.shape != (n + 2,) or (x1 < 0).any():
        raise ConfigError(f"x1 must be a non-negative vector of length {n + 2}")
    return CouplingSetup(w[:n, :n].copy(), w[:n, n].copy(), w[:n, n + 1].copy(),
                         float(w_minus), float(w_plus), x1)


def default_coupling_graph() -> WeightedGraph:
    """7x7 grid (vertex 48 is a corner) plus vertex 49 tied to two other corners: n = 48 inner."""
    box = lattice_box(2, 7, 1.0)
    rng = np.random.default_rng(7)
    edges = [(u, v, float(rng.uniform(0.5, 2.0))) for u, v in box.edges]
    edges += [(0, 49, 0.8), (6, 49, 1.3)]
    return build_graph(50, edges)


def small_coupling_graph() -> WeightedGraph:
    """Inner triangle 0-1-2; outer 3 tied to 0 and 1, outer 4 tied to 2."""
    return build_graph(5, [(0, 1, 1.0), (1, 2, 0.7), (0, 2, 1.5), (0, 3, 1.0), (1, 3, 0.5),
                           (2, 4, 1.2), (3, 4, 1.0)])


SMALL_X1 = (1.0, 0.0, 0.5, 0.2, 1.0)


# --------------------------------------------------------------------------
# exact identities


def triple_identity_experiment(setup: CouplingSetup, n: int = 10_000, seed: int = 0,
                               threads: int = 1, tol: float = 1e-9, x2=None) -> TestReport:
    _positive(n=n)
    t0 = time.perf_counter()
    checks = replicate_map(lambda rng, m: cp.triple_identities(setup.triples(rng, m), x2, tol),
                           n, seed, "triple-identities", threads)
    errors = {k: max(c.errors[k] for c in checks) for k in checks[0].errors}
    float_errors = {k: max(c.float_errors[k] for c in checks) for k in checks[0].float_errors}
    exact = {k: max(c.exact_errors[k] for c in checks) for k in checks[0].exact_errors}
    worst = max(errors.values())
    return TestReport(
        "triple_identities", worst, tol, worst <= tol, seed,
        params={"n": n, "n_inner": setup.n_inner, "w_minus": setup.w_minus, "w_plus": setup.w_plus},
        details={"errors": errors, "float64_errors": float_errors, "exact_errors": exact,
                 "escalated": sum(c.escalated for c in checks),
                 "seconds": time.perf_counter() - t0},
    )


def change_of_variables_experiment(n: int = 100_000, seed: int = 0, tol: float = 1e-10,
                                   rank_tol: float = 1e-8) -> TestReport:
    """Round trips beta <-> (gamma, Z) and the rank-one residual.

    ``(gamma, Z) -> beta -> (gamma, Z)`` uses gamma in [0.01, 10], Z
    log-uniform on [1e-2, 1e2], w in [0.01, 5] and lam in [0, 1];
    ``beta -> (gamma, Z) -> beta`` starts from two-point beta-field draws.
    """
    _positive(n=n)
    rng = substream(seed, "change-of-variables")
    gamma = rng.uniform(0.01, 10.0, n)
    z = np.exp(rng.uniform(np.log(1e-2), np.log(1e2), n))
    w = rng.uniform(0.01, 5.0, n)
    lam = rng.uniform(0.0, 1.0, n)
    gz = cp.GammaZ(gamma, z, lam, w)
    b1, b2 = cp.gammaz_to_beta(gz)
    back = cp.beta_to_gammaz(b1, b2, w, lam)
    err_gz = max(float(cp._rel(back.gamma, gamma).max()), float(cp._rel(back.z, z).max()))

    w2 = rng.uniform(0.05, 5.0, n)
    wm = np.zeros((n, 2, 2))
    wm[:, 0, 1] = wm[:, 1, 0] = w2
    beta = sample_beta(wm, None, rng).beta
    fwd = cp.beta_to_gammaz(beta[:, 0], beta[:, 1], w2, lam)
    c1, c2 = cp.gammaz_to_beta(fwd)
    err_beta = max(float(cp._rel(c1, beta[:, 0]).max()), float(cp._rel(c2, beta[:, 1]).max()))

    h = np.empty((n, 2, 2))
    h[:, 0, 0], h[:, 1, 1] = 2 * beta[:, 0], 2 * beta[:, 1]
    h[:, 0, 1] = h[:, 1, 0] = -w2
    y = np.stack([lam, 1.0 - lam], axis=1)
    resid = h - fwd.gamma[:, None, None] * y[:, :, None] * y[:, None, :]
    sv = np.linalg.svd(resid, compute_uv=False)
    rank_ratio = float((sv[:, -1] / np.abs(h).max(axis=(1, 2))).max())

    worst = max(err_gz, err_beta)
    return TestReport(
        "change_of_variables", worst, tol, worst <= tol and rank_ratio <= rank_tol, seed,
        params={"n": n},
        details={"gammaz_round_trip": err_gz, "beta_round_trip": err_beta,
                 "rank_one_residual": rank_ratio, "rank_tol": rank_tol},
    )


def random_pd(dim: int, rng: np.random.Generator, max_cond: float = 1e4) -> np.ndarray:
    """``Q diag(lam) Q^T`` with Haar ``Q`` and log-uniform spectrum of spread ``max_cond``."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    q = q * np.sign(np.diag(r))
    lam = np.exp(rng.uniform(0.0, np.log(max_cond), dim))
    return (q * lam) @ q.T


def block_inverse_experiment(n: int = 2_000, dim: int = 12, seed: int = 0,
                             tol: float = 1e-8, max_cond: float = 1e4) -> TestReport:
    """``block_inverse`` vs ``invert_pd`` on random PD matrices.

    Half the matrices are dense (random eigenbasis, condition number up to
    ``max_cond``), half are diagonally dominant M-matrices on random graphs.
    """
    _positive(n=n)
    rng = substream(seed, "block-inverse")
    worst = 0.0
    for j in range(n):
        if j % 2:
            h = random_pd(dim, rng, max_cond)
        else:
            w = _random_weights(dim, rng)
            h = np.diag(w.sum(axis=1) + rng.uniform(0.05, 1.0, dim)) - w
        split = int(rng.integers(1, dim))
        a, b = block_inverse(h, split), invert_pd(h)
        worst = max(worst, float(np.abs(a - b).max() / np.abs(b).max()))
    return TestReport("block_inverse", worst, tol, worst <= tol, seed,
                      params={"n": n, "dim": dim, "max_cond": max_cond})


def _random_weights(dim: int, rng: np.random.Generator, p: float = 0.4) -> np.ndarray:
    """Random connected weight matrix: a random spanning path plus extra edges."""
    order = rng.permutation(dim)
    w = np.zeros((dim, dim))
    for a, b in zip(order[:-1], order[1:]):
        w[a, b] = w[b, a] = rng.uniform(0.2, 3.0)
    extra = np.triu(rng.random((dim, dim)) < p, 1) & (w == 0)
    vals = rng.uniform(0.2, 3.0, (dim, dim))
    w = w + np.where(extra, vals, 0.0) + np.where(extra, vals, 0.0).T
    return w


# --------------------------------------------------------------------------
# distributional tests


def gamma_z_law_experiment(w: float = 1.0, lam: float = 0.3, n: int = 100_000, seed: int = 0,
                           threads: int = 1) -> TestReport:
    """Two-point draws mapped to ``(gamma, U)``.

    ``gamma`` must be chi-square(1); given gamma, ``U`` is tilted Gaussian
    with precision ``w + lam(1-lam) gamma`` and tilt ``1 - 2 lam``, checked
    through the probability-integral transform.
    """
    _positive(n=n)
    wm = np.array([[0.0, w], [w, 0.0]])
    beta = _draw(lambda rng, m: sample_beta(wm, None, rng, size=m).beta, n, seed, "gamma-z", threads)
    gz = cp.beta_to_gammaz(beta[:, 0], beta[:, 1], w, lam)
    g_rep = ks_1samp(gz.gamma, stats.chi2(1).cdf, "gamma_law")
    u = cp.u_from_z(gz.z)
    pit = cp.tilted_cdf(u, w + lam * (1 - lam) * gz.gamma, 1.0 - 2.0 * lam)
    u_rep = ks_1samp(pit, stats.uniform.cdf, "u_given_gamma")
    p = min(g_rep.statistic, u_rep.statistic)
    return TestReport("gamma_z_law", p, KS_ALPHA, g_rep.passed and u_rep.passed, seed,
                      params={"w": w, "lam": lam, "n": n},
                      details={"gamma_p": g_rep.statistic, "u_pit_p": u_rep.statistic})


def tilted_marginal_experiment(k_minus: float = 0.7, k_plus: float = 2.5, delta: float = 0.4,
                               n: int = 100_000, seed: int = 0, threads: int = 1) -> TestReport:
    """``U+`` and ``U-`` from :func:`couple_tilted` against the tilted CDFs."""
    _positive(n=n)

    def draw(rng, m):
        c = cp.couple_tilted(k_minus, k_plus, delta, rng, size=m)
        return c.u_plus, c.u_minus

    up, um = _draw(draw, n, seed, "tilted-marginal", threads)
    rp = ks_1samp(up, lambda u: cp.tilted_cdf(u, k_plus, delta), "u_plus")
    rm = ks_1samp(um, lambda u: cp.tilted_cdf(u, k_minus, delta), "u_minus")
    energy = float(cp._rel(k_minus * um**2, k_plus * up**2).max())
    return TestReport("tilted_marginals", min(rp.statistic, rm.statistic), KS_ALPHA,
                      rp.passed and rm.passed and energy <= 1e-12, seed,
                      params={"k_minus": k_minus, "k_plus": k_plus, "delta": delta, "n": n},
                      details={"u_plus_p": rp.statistic, "u_minus_p": rm.statistic,
                               "energy_rel_error": energy})


def abs_u_experiment(k: float = 1.0, n: int = 100_000, seed: int = 0, threads: int = 1) -> TestReport:
    """``|U|`` has the same law for tilt 1 and tilt 0."""
    _positive(n=n)
    a = _draw(lambda rng, m: cp.sample_tilted(k, 1.0, rng, size=m), n, seed, "abs-u-1", threads)
    b = _draw(lambda rng, m: cp.sample_tilted(k, 0.0, rng, size=m), n, seed, "abs-u-0", threads)
    rep = ks_2samp(np.abs(a), np.abs(b), "abs_u_tilt_free", k=k, n=n)
    rep.seed = seed
    return rep


def coupled_marginal_experiment(setup: CouplingSetup, n: int = 100_000, seed: int = 0,
                                threads: int = 1, variant: str | None = None) -> TestReport:
    """Outer beta coordinates of the coupled ``H-`` and ``H+`` against direct
    samplers on the full graphs, plus the coupled ``U+``, ``U-`` and ``gamma``
    against their laws (``U`` through the per-sample tilted CDF)."""
    _positive(n=n)
    nn = setup.n_inner

    def coupled(rng, m):
        t = setup.triples(rng, m, variant=variant)
        uc = t.u_couple
        pit_p = cp.tilted_cdf(uc.u_plus, uc.k_plus, uc.delta)
        ok = np.isfinite(uc.u_minus)
        pit_m = np.where(ok, cp.tilted_cdf(np.where(ok, uc.u_minus, 0.0),
                                           np.where(ok, uc.k_minus, 1.0), uc.delta), np.nan)
        return (t.h_minus[:, nn, nn] / 2, t.h_minus[:, nn + 1, nn + 1] / 2,
                t.h_plus[:, nn, nn] / 2, t.h_plus[:, nn + 1, nn + 1] / 2,
                t.gamma, pit_p, pit_m)

    def direct(w_edge, key):
        wf = setup.full_weights(w_edge)
        b = _draw(lambda rng, m: sample_beta(wf, None, rng, size=m).beta[:, nn:], n, seed, key, threads)
        return b[:, 0], b[:, 1]

    bm1, bm2, bp1, bp2, gamma, pit_p, pit_m = _draw(coupled, n, seed, f"coupled-{variant}", threads)
    dm1, dm2 = direct(setup.w_minus, "direct-minus")
    dp1, dp2 = direct(setup.w_plus, "direct-plus")
    reports = [
        ks_2samp(bm1, dm1, "minus_beta_n+1"), ks_2samp(bm2, dm2, "minus_beta_n+2"),
        ks_2samp(bp1, dp1, "plus_beta_n+1"), ks_2samp(bp2, dp2, "plus_beta_n+2"),
        ks_1samp(gamma, stats.chi2(1).cdf, "gamma"),
        ks_1samp(pit_p, stats.uniform.cdf, "u_plus_pit"),
        ks_1samp(pit_m[np.isfinite(pit_m)], stats.uniform.cdf, "u_minus_pit"),
    ]
    name = "coupled_marginals" + (f"[{variant}]" if variant else "")
    return TestReport(name, min(r.statistic for r in reports), KS_ALPHA,
                      all(r.passed for r in reports), seed,
                      params={"n": n, "n_inner": nn, "variant": variant},
                      details={r.name: r.statistic for r in reports})


def psi_two_point_experiment(w: float = 1.0, n: int = 100_000, seed: int = 0,
                             threads: int = 1) -> TestReport:
    """``G(0,1)/G(1,1)`` on a single edge follows the inverse Gaussian of mean 1, shape ``w``."""
    _positive(n=n)
    wm = np.array([[0.0, w], [w, 0.0]])
    psi = _draw(lambda rng, m: psi_ratio(invert_pd_batch(sample_beta(wm, None, rng, size=m).h()), 0, 1),
                n, seed, "psi-two-point", threads)
    rep = ks_1samp(psi, lambda z: z_law_cdf(w, z), "psi_two_point", w=w, n=n)
    rep.seed = seed
    return rep


def psi_reduction_experiment(g: WeightedGraph | None = None, x0: int = 0, delta: int | None = None,
                             n: int = 100_000, seed: int = 0, threads: int = 1) -> TestReport:
    """Given the rest of the field, ``psi`` is inverse Gaussian with shape ``w_eff``.

    Tested through the per-sample transform ``F_{w_eff}(psi)``, which must be
    uniform.
    """
    _positive(n=n)
    g = g if g is not None else lattice_box(2, 3, 1.0)
    delta = g.n_vertices - 1 if delta is None else delta
    wm = g.weight_matrix()

    def draw(rng, m):
        green = invert_pd_batch(sample_beta(wm, None, rng, size=m).h())
        return z_law_cdf(effective_weight(green, x0, delta), psi_ratio(green, x0, delta))

    pit = _draw(draw, n, seed, "psi-reduction", threads)
    rep = ks_1samp(pit, stats.uniform.cdf, "psi_given_w_eff", n=n, n_vertices=g.n_vertices)
    rep.seed = seed
    return rep


# --------------------------------------------------------------------------
# mean identities


def gig_mean_experiment(eta: float, n: int = 100_000, seed: int = 0) -> TestReport:
    """``E[1/(2 beta)] = 1/eta`` under the one-point law with source ``eta``."""
    _positive(n=n)
    h = sample_gig_half(1.0, eta**2, substream(seed, "gig-mean", repr(eta)), size=n)
    est = estimate(1.0 / h)
    z = abs(est.mean - 1.0 / eta) / est.stderr
    return TestReport(f"gig_mean[eta={eta:g}]", z, MEAN_K, z <= MEAN_K, seed,
                      params={"eta": eta, "n": n},
                      details={"mean": est.mean, "stderr": est.stderr, "target": 1.0 / eta})


def tilted_ratio_experiment(delta: float, delta_prime: float, k: float = 1.0, n: int = 100_000,
                            seed: int = 0) -> TestReport:
    _positive(n=n)
    rng = substream(seed, "tilted-ratio", repr((delta, delta_prime, k)))
    est = cp.tilted_ratio_mean(cp.TiltedParams(k, delta), delta_prime, n, rng)
    z = abs(est.mean - 1.0) / est.stderr if est.stderr > 0 else abs(est.mean - 1.0) / 1e-15
    return TestReport(f"tilted_ratio[{delta:g},{delta_prime:g}]", z, MEAN_K, z <= MEAN_K, seed,
                      params={"delta": delta, "delta_prime": delta_prime, "k": k, "n": n},
                      details={"mean": est.mean, "stderr": est.stderr})


# --------------------------------------------------------------------------
# conditional martingale


def _forms(h, x, y) -> np.ndarray:
    """``x^T h^{-1} y`` for a stack of PD matrices."""
    sol = np.linalg.solve(h, np.broadcast_to(y, h.shape[:-1])[..., None])[..., 0]
    return sol @ x


def _agree(est: McEstimate, target: float, k: float) -> bool:
    # stderr can vanish (point-mass conditional laws); keep a rounding floor
    return abs(est.mean - target) <= k * est.stderr + 1e-9 * abs(target)


def martingale_experiment(setup: CouplingSetup, x2=None, outer: int = 100, inner: int = 10_000,
                          seed: int = 0, threads: int = 1, min_fraction: float = 0.95) -> TestReport:
    """Conditional means over redraws given ``H_inf`` and given ``H+``.

    For each of ``outer`` triples, ``inner`` redraws of ``H+`` given ``H_inf``
    are averaged against ``xbar1^T G_inf xbar2`` and ``inner`` redraws of
    ``H-`` given ``H+`` against ``x1^T G+ x2``.
    """
    _positive(outer=outer, inner=inner)
    x1 = setup.x1
    x2 = x1 if x2 is None else np.asarray(x2, dtype=float)
    nn = setup.n_inner
    xb1 = np.concatenate([x1[:nn], [x1[nn] + x1[nn + 1]]])
    xb2 = np.concatenate([x2[:nn], [x2[nn] + x2[nn + 1]]])

    def one(rng, m):
        rows = []
        for _ in range(m):
            t = setup.triples(rng, 1)[0]
            target_inf = float(_forms(t.h_inf, xb1, xb2))
            target_plus = float(_forms(t.h_plus, x1, x2))
            est_p = estimate(_forms(t.redraw_plus(rng, inner), x1, x2))
            ok_p = _agree(est_p, target_inf, COND_K)
            if np.isfinite(t.u_couple.u_minus):
                est_m = estimate(_forms(t.redraw_minus(rng, inner), x1, x2))
                ok_m = _agree(est_m, target_plus, COND_K)
            else:
                ok_m = np.nan
            rows.append((ok_p, ok_m))
        return np.array(rows, dtype=float)

    res = np.concatenate(replicate_map(one, outer, seed, "martingale", threads, chunk=10))
    frac_p = float(res[:, 0].mean())
    conn = np.isfinite(res[:, 1])
    frac_m = float(res[conn, 1].mean()) if conn.any() else 1.0
    stat = min(frac_p, frac_m)
    return TestReport(
        "martingale", stat, min_fraction, stat >= min_fraction, seed,
        params={"outer": outer, "inner": inner, "n_inner": nn,
                "w_minus": setup.w_minus, "w_plus": setup.w_plus},
        details={"fraction_given_h_inf": frac_p, "fraction_given_h_plus": frac_m,
                 "h_minus_connected": int(conn.sum())},
    )


# --------------------------------------------------------------------------
# orderings


def _hinge(m: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: np.maximum(1.0 - m * x, 0.0)


CONVEX_FAMILY: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "square": np.square,
    "exp_neg": lambda x: np.exp(-x),
    "hinge10": _hinge(10.0),
}


def _edge_weight_matrix(g: WeightedGraph, w) -> np.ndarray:
    u, v, gw = g.edge_array()
    vals = np.broadcast_to(np.asarray(w, dtype=float), gw.shape)
    m = np.zeros((g.n_vertices, g.n_vertices))
    m[u, v] = m[v, u] = vals
    return m


def _ratio_samples(wm: np.ndarray, i: int, x: np.ndarray, n: int, seed: int, key: str, threads: int):
    def draw(rng, m):
        green = invert_pd_batch(sample_beta(wm, None, rng, size=m).h())
        return green[:, i, :] @ x / green[:, i, i]
    return _draw(draw, n, seed, key, threads)


def convex_order_experiment(g: WeightedGraph, w_minus, w_plus, i: int, x, n: int = 10_000,
                            seed: int = 0, threads: int = 1,
                            family: Mapping[str, Callable] | None = None) -> TestReport:
    """``E f(R-) >= E f(R+) - 2 se`` for ``R = sum_j x_j G(i,j) / G(i,i)``.

    The two sides are sampled independently.  The identity ``f(x) = x`` is
    run alongside as a two-sided calibration (both means equal ``sum x``).
    """
    _positive(n=n)
    family = CONVEX_FAMILY if family is None else family
    wm, wp = _edge_weight_matrix(g, w_minus), _edge_weight_matrix(g, w_plus)
    if (wm > wp).any():
        raise ConfigError("need w_minus <= w_plus on every edge")
    if (wm[wp > 0] <= 0).any():
        raise ConfigError("w_minus must be positive on every edge")
    x = np.asarray(x, dtype=float)
    if x.shape != (g.n_vertices,) or (x < 0).any():
        raise ConfigError("x must be a non-negative vector with one entry per vertex")
    r_minus = _ratio_samples(wm, i, x, n, seed, "convex-minus", threads)
    r_plus = _ratio_samples(wp, i, x, n, seed, "convex-plus", threads)

    details, margins, passed = {}, [], True
    for name, f in family.items():
        em, ep = estimate(f(r_minus)), estimate(f(r_plus))
        slack = ORDER_K * _combined(em, ep)
        ok = em.mean >= ep.mean - slack
        passed &= ok
        margins.append((em.mean - ep.mean) / max(_combined(em, ep), 1e-300))
        details[name] = {"mean_minus": em.mean, "se_minus": em.stderr, "mean_plus": ep.mean,
                         "se_plus": ep.stderr, "pass": ok}
    em, ep = estimate(r_minus), estimate(r_plus)
    calib = abs(em.mean - ep.mean) <= MEAN_K * _combined(em, ep)
    details["linear_calibration"] = {"mean_minus": em.mean, "mean_plus": ep.mean,
                                     "target": float(x.sum()), "pass": calib}
    return TestReport("convex_order", min(margins), -ORDER_K, passed and calib, seed,
                      params={"n": n, "i": i, "n_vertices": g.n_vertices},
                      details=details)


def monotonicity_scan(d: int, side: int, weights: Sequence[float], x0: int | None = None,
                      n: int = 10_000, seed: int = 0, threads: int = 1, radius: int = 2,
                      ms: Sequence[float] = (1, 10, 100)):
    """``E f_m(psi)`` on the ball quotient of a lattice box, for each weight.

    Returns ``(rows, report)``; rows are ``(w, m, mean, stderr)`` and the
    report passes iff each ``m`` column is nonincreasing in ``w`` up to
    ``2 se`` of slack between neighbours.
    """
    _positive(n=n)
    weights = [float(w) for w in weights]
    if weights != sorted(weights):
        raise ConfigError("weights must be ascending")
    x0 = (side**d) // 2 if x0 is None else x0
    rows, table = [], {}
    for w in weights:
        q = ball_quotient(lattice_box(d, side, w), x0, radius)
        wm = q.graph.weight_matrix()
        root, sink = q.projection[x0], q.merged_vertex
        psi = _draw(lambda rng, m: psi_ratio(invert_pd_batch(sample_beta(wm, None, rng, size=m).h()),
                                             root, sink),
                    n, seed, f"scan-{w!r}", threads)
        for m in ms:
            est = estimate(_hinge(m)(psi))
            table[(w, m)] = est
            rows.append((w, m, est.mean, est.stderr))
    worst = math.inf
    for m in ms:
        for a, b in zip(weights[:-1], weights[1:]):
            ea, eb = table[(a, m)], table[(b, m)]
            se = _combined(ea, eb)
            worst = min(worst, (ea.mean - eb.mean) / se if se > 0 else math.inf)
    passed = worst >= -ORDER_K
    report = TestReport("monotonicity_scan", worst, -ORDER_K, passed, seed,
                        params={"d": d, "side": side, "weights": weights, "x0": x0,
                                "radius": radius, "n": n},
                        details={"rows": [list(r) for r in rows]})
    return rows, report


# --------------------------------------------------------------------------
# electrical


def conductance_closed_forms(tol: float = 1e-12) -> TestReport:
    cases = {
        "series": (build_graph(3, [(0, 1, 1), (1, 2, 1)]), 0, 2, 0.5),
        "four_cycle": (build_graph(4, [(0, 1, 1), (1, 2, 1), (2, 3, 1), (0, 3, 1)]), 0, 2, 1.0),
        "triangle": (build_graph(3, [(0, 1, 1), (1, 2, 1), (0, 2, 1)]), 0, 1, 1.5),
    }
    errs = {k: abs(effective_conductance(g, None, a, b) - v) / v for k, (g, a, b, v) in cases.items()}
    worst = max(errs.values())
    return TestReport("conductance_closed_forms", worst, tol, worst <= tol, details=errs)


def eff_weight_experiment(g: WeightedGraph, x0: int, delta: int, n: int = 100_000, seed: int = 0,
                          threads: int = 1, w=None) -> TestReport:
    """``E[w_eff] <= c_eff`` with conductances equal to the (deterministic) weights."""
    _positive(n=n)
    if w is not None:
        g = g.with_weights(w)
    wm = g.weight_matrix()
    vals = _draw(lambda rng, m: effective_weight(invert_pd_batch(sample_beta(wm, None, rng, size=m).h()),
                                                 x0, delta),
                 n, seed, "eff-weight", threads)
    est = estimate(vals)
    c_eff = effective_conductance(g, None, x0, delta)
    z = (est.mean - c_eff) / est.stderr if est.stderr > 0 else (0.0 if est.mean <= c_eff * (1 + 1e-12) else math.inf)
    return TestReport("eff_weight", z, ORDER_K, z <= ORDER_K, seed,
                      params={"n": n, "x0": x0, "delta": delta, "n_vertices": g.n_vertices},
                      details={"mean_w_eff": est.mean, "stderr": est.stderr, "c_eff": c_eff})


def eff_weight_formula_experiment(n_graphs: int = 200, seed: int = 0, tol: float = 1e-9) -> TestReport:
    """Green-matrix and Schur forms of ``w_eff`` on random graphs and fields."""
    _positive(n_graphs=n_graphs)
    rng = substream(seed, "eff-weight-formula")
    worst = 0.0
    for _ in range(n_graphs):
        dim = int(rng.integers(2, 13))
        w = _random_weights(dim, rng)
        h = sample_beta(w, None, rng).h()
        x, y = (int(v) for v in rng.choice(dim, 2, replace=False))
        a = float(effective_weight(invert_pd(h), x, y))
        b = effective_weight_schur(w, h, x, y)
        worst = max(worst, abs(a - b) / max(abs(a), abs(b)))
    return TestReport("eff_weight_formulas", worst, tol, worst <= tol, seed,
                      params={"n_graphs": n_graphs})


# --------------------------------------------------------------------------
# process equivalences


def _path_counts(sampler, k: int, n: int, seed: int, key: str, threads: int) -> Counter:
    parts = replicate_map(lambda rng, m: path_distribution(sampler, k, m, rng), n, seed, key, threads)
    return merge_counts(parts)


def errw_equivalence_experiment(g: WeightedGraph, a, k: int = 4, n: int = 100_000, seed: int = 0,
                                threads: int = 1, x0: int = 0) -> TestReport:
    _positive(n=n)
    a_tag = repr(a)
    direct = _path_counts(lambda r, m, kk: errw_paths(g, a, x0, kk, m, r), k, n, seed, "errw-" + a_tag, threads)
    mixed = _path_counts(lambda r, m, kk: errw_via_vrjp_paths(g, a, x0, kk, m, r), k, n, seed,
                         "errw-vrjp-" + a_tag, threads)
    rep = chi2_homogeneity(direct, mixed, "errw_vs_vrjp_gamma", a=a, k=k, n=n,
                           n_vertices=g.n_vertices)
    rep.seed = seed
    return rep


def vrjp_conductance_experiment(g: WeightedGraph, k: int = 4, n: int = 100_000, seed: int = 0,
                                threads: int = 1, x0: int = 0, w=None) -> TestReport:
    _positive(n=n)
    if w is not None:
        g = g.with_weights(w)
    tag = repr(w)
    skel = _path_counts(lambda r, m, kk: vrjp_paths(g, None, x0, kk, m, r)[0], k, n, seed,
                        "vrjp-" + tag, threads)
    walk = _path_counts(lambda r, m, kk: beta_walk_paths(g, x0, kk, m, r), k, n, seed,
                        "beta-walk-" + tag, threads)
    rep = chi2_homogeneity(skel, walk, "vrjp_vs_beta_conductances", w=w, k=k, n=n,
                           n_vertices=g.n_vertices)
    rep.seed = seed
    return rep


# --------------------------------------------------------------------------
# negative controls and the suite


def negative_control(setup: CouplingSetup, variant: str, n: int = 100_000, seed: int = 0,
                     threads: int = 1) -> TestReport:
    """Passes iff the marginal test *rejects* the coupling built with ``variant``."""
    inner = coupled_marginal_experiment(setup, n, seed, threads, variant=variant)
    return TestReport(f"negative_control[{variant}]", inner.statistic, KS_ALPHA, not inner.passed,
                      seed, params=inner.params, details=inner.details)


def _graph_from(spec) -> WeightedGraph:
    """Graph from a config value: a name, ``{"lattice": "d,L,w"}`` or ``{"edges": [[u, v, w], ...]}``."""
    named = {
        "triangle": lambda: build_graph(3, [(0, 1, 1), (1, 2, 1), (0, 2, 1)]),
        "four_cycle": lambda: build_graph(4, [(0, 1, 1), (1, 2, 1), (2, 3, 1), (0, 3, 1)]),
        "k4": lambda: build_graph(4, [(u, v, 1) for u in range(4) for v in range(u + 1, 4)]),
        "single_edge": lambda: build_graph(2, [(0, 1, 1)]),
        "coupling_small": small_coupling_graph,
        "coupling_default": default_coupling_graph,
    }
    if isinstance(spec, str):
        if spec not in named:
            raise ConfigError(f"unknown graph {spec!r}; known: {sorted(named)}")
        return named[spec]()
    if isinstance(spec, Mapping) and "lattice" in spec:
        from .graphs import parse_lattice_spec
        return parse_lattice_spec(spec["lattice"])
    if isinstance(spec, Mapping) and "edges" in spec:
        edges = [tuple(e) for e in spec["edges"]]
        n = spec.get("n_vertices", 1 + max(max(u, v) for u, v, _ in edges))
        return build_graph(n, edges)
    raise ConfigError(f"cannot build a graph from {spec!r}")


def _setup_from(p: Mapping) -> CouplingSetup:
    g = _graph_from(p.get("graph", "coupling_small"))
    x1 = p.get("x1")
    if x1 is None and p.get("graph", "coupling_small") == "coupling_small":
        x1 = SMALL_X1
    return coupling_setup(g, p.get("w_minus", 0.5), p.get("w_plus", 2.0), x1)


def _t_identities(p, seed, threads):
    return triple_identity_experiment(_setup_from({"graph": "coupling_default", **p}),
                                      p.get("n", 10_000), seed, threads)


def _t_gamma_z(p, seed, threads):
    return gamma_z_law_experiment(p.get("w", 1.0), p.get("lam", 0.3), p.get("n", 100_000), seed, threads)


def _t_tilted(p, seed, threads):
    return tilted_marginal_experiment(p.get("k_minus", 0.7), p.get("k_plus", 2.5), p.get("delta", 0.4),
                                      p.get("n", 100_000), seed, threads)


def _t_abs_u(p, seed, threads):
    return abs_u_experiment(p.get("k", 1.0), p.get("n", 100_000), seed, threads)


def _t_coupled(p, seed, threads):
    return coupled_marginal_experiment(_setup_from(p), p.get("n", 100_000), seed, threads)


def _t_negative(p, seed, threads):
    return negative_control(_setup_from(p), p["variant"], p.get("n", 100_000), seed, threads)


def _t_psi2(p, seed, threads):
    return psi_two_point_experiment(p.get("w", 1.0), p.get("n", 100_000), seed, threads)


def _t_psi_red(p, seed, threads):
    g = _graph_from(p.get("graph", {"lattice": "2,3,1"}))
    return psi_reduction_experiment(g, p.get("x0", 0), p.get("delta"), p.get("n", 100_000), seed, threads)


def _t_gig(p, seed, threads):
    return [gig_mean_experiment(e, p.get("n", 100_000), seed) for e in p.get("etas", (0.5, 1.0, 2.0))]


def _t_ratio(p, seed, threads):
    pairs = p.get("pairs", ((0.0, 1.0), (1.0, -1.0), (0.5, -0.5)))
    return [tilted_ratio_experiment(d, dp, p.get("k", 1.0), p.get("n", 100_000), seed) for d, dp in pairs]


def _t_martingale(p, seed, threads):
    x2 = p.get("x2")
    return martingale_experiment(_setup_from(p), None if x2 is None else np.asarray(x2, float),
                                 p.get("outer", 100), p.get("inner", 10_000), seed, threads)


def _t_convex(p, seed, threads):
    g = _graph_from(p.get("graph", "four_cycle"))
    x = p.get("x")
    if x is None:
        x = np.zeros(g.n_vertices)
        x[-1] = 1.0
    return convex_order_experiment(g, p.get("w_minus", 0.5), p.get("w_plus", 2.0), p.get("i", 0), x,
                                   p.get("n", 10_000), seed, threads)


def _t_scan(p, seed, threads):
    return monotonicity_scan(p.get("d", 3), p.get("side", 3), p.get("weights", (0.5, 1, 2, 4)),
                             p.get("x0"), p.get("n", 10_000), seed, threads, p.get("radius", 2))[1]


def _t_closed(p, seed, threads):
    return conductance_closed_forms()


def _t_eff(p, seed, threads):
    g = _graph_from(p.get("graph", "triangle"))
    return eff_weight_experiment(g, p.get("x0", 0), p.get("delta", 1), p.get("n", 100_000), seed, threads)


def _t_eff_formula(p, seed, threads):
    return eff_weight_formula_experiment(p.get("n_graphs", 200), seed)


def _t_cov(p, seed, threads):
    return change_of_variables_experiment(p.get("n", 100_000), seed)


def _t_block(p, seed, threads):
    return block_inverse_experiment(p.get("n", 2_000), p.get("dim", 12), seed)


def _t_errw(p, seed, threads):
    g = _graph_from(p.get("graph", "triangle"))
    return errw_equivalence_experiment(g, p.get("a", 1.0), p.get("k", 4), p.get("n", 100_000), seed, threads)


def _t_vrjp(p, seed, threads):
    g = _graph_from(p.get("graph", "triangle"))
    return vrjp_conductance_experiment(g, p.get("k", 4), p.get("n", 100_000), seed, threads, w=p.get("w"))


TESTS: dict[str, Callable] = {
    "triple_identities": _t_identities,
    "change_of_variables": _t_cov,
    "block_inverse": _t_block,
    "gamma_z_law": _t_gamma_z,
    "tilted_marginals": _t_tilted,
    "abs_u": _t_abs_u,
    "coupled_marginals": _t_coupled,
    "psi_two_point": _t_psi2,
    "psi_reduction": _t_psi_red,
    "gig_mean": _t_gig,
    "tilted_ratio": _t_ratio,
    "martingale": _t_martingale,
    "convex_order": _t_convex,
    "monotonicity_scan": _t_scan,
    "conductance_closed_forms": _t_closed,
    "eff_weight": _t_eff,
    "eff_weight_formulas": _t_eff_formula,
    "errw_equivalence": _t_errw,
    "vrjp_conductance": _t_vrjp,
    "negative_control": _t_negative,
}

_COUNT_KEYS = ("n", "outer", "inner", "n_graphs")


def default_suite_config(seed: int = 20240607) -> dict:
    t = []
    t.append({"name": "triple_identities", "params": {}})
    t.append({"name": "change_of_variables", "params": {}})
    t.append({"name": "block_inverse", "params": {}})
    t.append({"name": "gamma_z_law", "params": {}})
    t.append({"name": "tilted_marginals", "params": {}})
    t.append({"name": "abs_u", "params": {}})
    t.append({"name": "coupled_marginals", "params": {}})
    t.append({"name": "psi_two_point", "params": {"w": 1.0}})
    t.append({"name": "psi_reduction", "params": {}})
    t.append({"name": "gig_mean", "params": {}})
    t.append({"name": "tilted_ratio", "params": {}})
    t.append({"name": "martingale", "params": {}})
    for graph in ("four_cycle", {"lattice": "3,3,1"}):
        t.append({"name": "convex_order", "params": {"graph": graph}})
    t.append({"name": "convex_order", "params": {"graph": "four_cycle", "w_minus": 1.0, "w_plus": 1.0}})
    t.append({"name": "monotonicity_scan", "params": {}})
    t.append({"name": "monotonicity_scan", "params": {"d": 1, "side": 9, "weights": [0.5, 2.0],
                                                      "radius": 4}})
    t.append({"name": "conductance_closed_forms", "params": {}})
    t.append({"name": "eff_weight", "params": {"graph": "triangle", "x0": 0, "delta": 1}})
    t.append({"name": "eff_weight", "params": {"graph": "four_cycle", "x0": 0, "delta": 2}})
    t.append({"name": "eff_weight", "params": {"graph": "k4", "x0": 0, "delta": 1}})
    t.append({"name": "eff_weight", "params": {"graph": "single_edge", "x0": 0, "delta": 1, "n": 1000}})
    t.append({"name": "eff_weight_formulas", "params": {}})
    for graph in ("triangle", "four_cycle"):
        for a in (0.5, 1.0, 3.0):
            t.append({"name": "errw_equivalence", "params": {"graph": graph, "a": a}})
            t.append({"name": "vrjp_conductance", "params": {"graph": graph, "w": a}})
    for variant in ("z_typo", "h_plus_typo"):
        t.append({"name": "negative_control", "params": {"variant": variant}})
    return {"seed": seed, "tests": t}


def validate_suite_config(config: Mapping) -> None:
    if not isinstance(config, Mapping) or "tests" not in config:
        raise ConfigError("suite config needs a 'tests' list")
    if not config["tests"]:
        raise ConfigError("suite config lists no tests")
    for i, entry in enumerate(config["tests"]):
        name = entry.get("name")
        if name not in TESTS:
            raise ConfigError(f"test #{i}: unknown test {name!r}")
        params = entry.get("params", {})
        for key in _COUNT_KEYS:
            if key in params and int(params[key]) < 1:
                raise ConfigError(f"test #{i} ({name}): {key} must be at least 1")
        if name == "negative_control" and params.get("variant") not in cp.VARIANTS:
            raise ConfigError(f"test #{i}: negative_control needs a variant from {cp.VARIANTS}")


def load_suite_config(path: str | Path) -> dict:
    """Read a JSON suite file: ``{"seed": int, "tests": [{"name": ..., "params": {...}}]}``."""
    try:
        config = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    validate_suite_config(config)
    return config


def run_suite(config: Mapping, threads: int = 1,
              on_report: Callable[[TestReport], None] | None = None) -> TestReport:
    """Run every configured test; exceptions become failed reports."""
    validate_suite_config(config)
    seed = int(config.get("seed", 0))
    reports: list[TestReport] = []
    for i, entry in enumerate(config["tests"]):
        name, params = entry["name"], dict(entry.get("params", {}))
        t0 = time.perf_counter()
        try:
            out = TESTS[name](params, int(substream(seed, "suite", i).integers(2**62)), threads)
            out = out if isinstance(out, list) else [out]
        except Exception as exc:  # recorded, not raised
            out = [TestReport(name, math.nan, math.nan, False, seed, params=params,
                              details={"error": repr(exc), "traceback": traceback.format_exc()})]
        for r in out:
            r.params = {**r.params, "suite_index": i}
            r.details = {**r.details, "seconds": time.perf_counter() - t0}
            reports.append(r)
            if on_report is not None:
                on_report(r)
    n_pass = sum(r.passed for r in reports)
    return TestReport("suite", float(n_pass), float(len(reports)), n_pass == len(reports), seed,
                      params={"n_tests": len(reports)},
                      details={"failed": [r.name for r in reports if not r.passed]})
