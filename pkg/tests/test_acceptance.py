"""Acceptance gate: every criterion at its stated scale and tolerance.

Each test prints one ``[PASS]``/``[FAIL]`` line (collected in the terminal
summary) listing the reports it is built from.
"""

import time

import numpy as np
import pytest

from vrjplab import experiments as ex
from vrjplab.graphs import build_graph, lattice_box

from conftest import ACCEPTANCE_LINES

SEED = 20240607


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def gate(label, reports, elapsed=None, limit_s=None):
    ok = all(r.passed for r in reports) and (limit_s is None or elapsed < limit_s)
    worst = ", ".join(f"{r.name}={r.statistic:.3g}" for r in reports)
    timing = "" if elapsed is None else f" [{elapsed:.1f}s" + (f" < {limit_s}s]" if limit_s else "]")
    line = f"[{'PASS' if ok else 'FAIL'}] {label}{timing}: {worst}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    failed = [r.line() for r in reports if not r.passed]
    assert ok, failed or f"runtime {elapsed:.1f}s over {limit_s}s"


@pytest.fixture(scope="module")
def small_setup():
    return ex.coupling_setup(ex.small_coupling_graph(), 0.5, 2.0, ex.SMALL_X1)


def test_criterion_1_exact_identities():
    setup = ex.coupling_setup(ex.default_coupling_graph(), 0.5, 2.0)
    assert setup.n_inner <= 50
    ident, secs = timed(lambda: ex.triple_identity_experiment(setup, 10_000, SEED, tol=1e-9))
    gate("1a per-sample identities (N=1e4, n=48, rel 1e-9)", [ident], secs, 120)
    gate("1b change of variables round trip (1e-10)",
         [ex.change_of_variables_experiment(100_000, SEED, tol=1e-10)])
    gate("1c Schur block inverse vs Cholesky (1e-8)", [ex.block_inverse_experiment(2_000, 12, SEED, tol=1e-8)])


def test_criterion_2_distributions(small_setup):
    runs = [
        lambda: ex.gamma_z_law_experiment(1.0, 0.3, 100_000, SEED),
        lambda: ex.tilted_marginal_experiment(0.7, 2.5, 0.4, 100_000, SEED),
        lambda: ex.abs_u_experiment(1.0, 100_000, SEED),
        lambda: ex.coupled_marginal_experiment(small_setup, 100_000, SEED),
        lambda: ex.psi_two_point_experiment(1.0, 100_000, SEED),
        lambda: ex.psi_reduction_experiment(lattice_box(2, 3, 1.0), 0, None, 100_000, SEED),
    ]
    reports, secs = zip(*(timed(run) for run in runs))
    gate("2 KS marginals (N=1e5, alpha 1e-3, slowest run)", list(reports), max(secs), 180)


def test_criterion_3_mean_identities():
    reports = [ex.gig_mean_experiment(eta, 100_000, SEED) for eta in (0.5, 1.0, 2.0)]
    reports += [ex.tilted_ratio_experiment(d, dp, 1.0, 100_000, SEED)
                for d, dp in ((0.0, 1.0), (1.0, -1.0), (0.5, -0.5))]
    reports.append(ex.tilted_ratio_experiment(1.0, -1.0, 0.3, 100_000, SEED))
    gate("3 mean identities (N=1e5, 3 stderr)", reports)


def test_criterion_4_martingale(small_setup):
    cross = np.array([0.0, 1.0, 0.0, 1.0, 0.0])
    rep, secs = timed(lambda: ex.martingale_experiment(small_setup, cross, 100, 10_000, SEED))
    gate("4 conditional martingale (100 x 1e4, >= 95/100 within 4 stderr)", [rep], secs, 300)


def test_criterion_5_orderings(four_cycle):
    x_cycle = np.array([0.0, 0.0, 0.0, 1.0])
    cube = lattice_box(3, 3, 1.0)
    x_cube = np.zeros(27)
    x_cube[-1] = 1.0
    reports = [
        ex.convex_order_experiment(four_cycle, 0.5, 2.0, 0, x_cycle, 10_000, SEED),
        ex.convex_order_experiment(cube, 0.5, 2.0, 0, x_cube, 10_000, SEED),
    ]
    reports.append(ex.monotonicity_scan(3, 3, [0.5, 1.0, 2.0, 4.0], None, 10_000, SEED)[1])
    gate("5 convex order (4-cycle, 3^3 box) and monotonicity scan (d=3)", reports)


def test_criterion_6_electrical(triangle, four_cycle):
    k4 = build_graph(4, [(u, v, 1.0) for u in range(4) for v in range(u + 1, 4)])
    reports = [ex.conductance_closed_forms(1e-12)]
    for g, x0, delta in ((triangle, 0, 1), (four_cycle, 0, 2), (k4, 0, 1)):
        reports.append(ex.eff_weight_experiment(g, x0, delta, 100_000, SEED))
    reports.append(ex.eff_weight_formula_experiment(200, SEED, tol=1e-9))
    gate("6 electrical (closed forms 1e-12, E w_eff <= c_eff + 2se, formulas 1e-9)", reports)


def test_criterion_7_process_equivalences(triangle, four_cycle):
    reports = []
    for g in (triangle, four_cycle):
        for a in (0.5, 1.0, 3.0):
            reports.append(ex.errw_equivalence_experiment(g, a, 4, 100_000, SEED))
            reports.append(ex.vrjp_conductance_experiment(g, 4, 100_000, SEED, w=a))
    gate("7 ERRW = VRJP(Gamma) and VRJP = beta-walk (chi-square, N=1e5)", reports)


def test_criterion_8_negative_controls(small_setup):
    reports = [ex.negative_control(small_setup, v, 100_000, SEED) for v in ("z_typo", "h_plus_typo")]
    gate("8 deliberately wrong couplings are rejected by the marginal KS test", reports)
