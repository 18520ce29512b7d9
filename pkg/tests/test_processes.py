import numpy as np
import pytest
from scipy import stats

from vrjplab.betafield import green, h_from_beta
from vrjplab.graphs import build_graph
from vrjplab.processes import (
    NeighborTable,
    beta_walk_paths,
    conductance_walk_paths,
    conductances_from_beta,
    errw_paths,
    errw_via_vrjp,
    errw_via_vrjp_paths,
    merge_counts,
    path_distribution,
    rw_conductances,
    simulate_errw,
    simulate_vrjp,
    vrjp_paths,
)
from vrjplab.stats import estimate

STAR = build_graph(3, [(0, 1, 1.0), (0, 2, 1.0)])
EDGE = build_graph(2, [(0, 1, 1.0)])


def freq(paths, prefix):
    prefix = np.asarray(prefix)
    return estimate((paths[:, : len(prefix)] == prefix).all(axis=1))


def test_neighbor_table(triangle):
    t = NeighborTable.of(triangle)
    assert t.nbr.shape == (3, 2) and t.mask.all()


def test_errw_first_step_symmetric(rng):
    paths = errw_paths(STAR, 1.0, 0, 1, 100_000, rng)
    assert freq(paths, [0, 1]).within(0.5, 3)


def test_errw_reinforcement(rng):
    # after 0 -> 1 -> 0 edge {0,1} carries 1 + 2 against 1 on {0,2}
    paths = errw_paths(STAR, 1.0, 0, 3, 200_000, rng)
    back = paths[(paths[:, 1] == 1)]
    assert estimate(back[:, 3] == 1).within(0.75, 3)


def test_errw_single_edge_alternates(rng):
    tr = simulate_errw(EDGE, 2.0, 0, 6, rng)
    assert tr.vertices.tolist() == [0, 1, 0, 1, 0, 1, 0]
    assert tr.local_times.tolist() == [3.0, 3.0] and tr.final_time == 6.0


def test_errw_triangle_enumeration(rng, triangle):
    counts = path_distribution(lambda r, n, k: errw_paths(triangle, 1.0, 0, k, n, r), 2, 120_000, rng)
    exact = {(0, 1, 0): 1 / 3, (0, 1, 2): 1 / 6, (0, 2, 0): 1 / 3, (0, 2, 1): 1 / 6}
    assert set(counts) == set(exact)
    obs = np.array([counts[p] for p in exact])
    assert stats.chisquare(obs, 120_000 * np.array(list(exact.values()))).pvalue > 1e-3


def test_vrjp_first_jump_exponential(rng):
    _, times, _ = vrjp_paths(EDGE.with_weights(2.5), None, 0, 1, 50_000, rng)
    assert stats.kstest(times[:, 0], stats.expon(scale=1 / 2.5).cdf).pvalue > 1e-3


def test_vrjp_rate_uses_target_local_time(rng):
    # second holding time at vertex 1 has rate w (1 + l_0) with l_0 the first holding time
    w = 0.8
    _, times, _ = vrjp_paths(EDGE.with_weights(w), None, 0, 2, 50_000, rng)
    t1, t2 = times[:, 0], times[:, 1] - times[:, 0]
    assert stats.kstest(t2 * w * (1 + t1), "expon").pvalue > 1e-3


def test_vrjp_first_target_uniform(rng):
    paths, _, _ = vrjp_paths(STAR, None, 0, 1, 100_000, rng)
    assert freq(paths, [0, 1]).within(0.5, 3)


def test_vrjp_local_times_sum_to_clock(rng, triangle):
    tr = simulate_vrjp(triangle, None, 0, 12, rng)
    assert tr.local_times.sum() == pytest.approx(tr.final_time)
    assert (np.diff(tr.jump_times) > 0).all() and tr.n_steps == 12


def test_errw_via_vrjp_zero_steps(rng, triangle):
    assert errw_via_vrjp(triangle, 1.0, 2, 0, rng).vertices.tolist() == [2]


def test_errw_via_vrjp_large_weights(rng):
    paths = errw_via_vrjp_paths(STAR, [1000.0, 3000.0], 0, 1, 50_000, rng)
    assert freq(paths, [0, 2]).within(0.75, 4)


def test_conductances_from_beta_two_point():
    g = green(h_from_beta(np.array([[0.0, 1.0], [1.0, 0.0]]), [1.0, 1.0]))
    c = conductances_from_beta(EDGE, g, 0)
    assert c == pytest.approx([2 / 9])


def test_conductances_respect_symmetry():
    cyc = build_graph(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)])
    w = cyc.weight_matrix()
    g = green(h_from_beta(w, [1.5, 1.2, 1.5, 1.2]))
    c = conductances_from_beta(cyc, g, 0)
    # reflection through the axis 0-2 swaps edges {0,1}<->{0,3} and {1,2}<->{2,3}
    e = {edge: k for k, edge in enumerate(cyc.edges)}
    assert c[e[(0, 1)]] == pytest.approx(c[e[(0, 3)]])
    assert c[e[(1, 2)]] == pytest.approx(c[e[(2, 3)]])


def test_conductance_walk_examples(rng, triangle):
    paths = conductance_walk_paths(STAR, [1.0, 3.0], 0, 1, 100_000, rng)
    assert freq(paths, [0, 2]).within(0.75, 3)
    # triangle edges (0,1),(0,2),(1,2) with c=(1,2,1): vertex 0 joins the 1- and 2-edges
    paths = conductance_walk_paths(triangle, [1.0, 2.0, 1.0], 0, 1, 100_000, rng)
    assert freq(paths, [0, 2]).within(2 / 3, 3)


def test_uniform_conductances_simple_walk(rng, four_cycle):
    a = conductance_walk_paths(four_cycle, 1.0, 0, 3, 50_000, rng)
    b = conductance_walk_paths(four_cycle, 7.0, 0, 3, 50_000, rng)
    ca, cb = path_distribution(lambda r, n, k: a, 3, 50_000, rng), path_distribution(lambda r, n, k: b, 3, 50_000, rng)
    assert set(ca) == set(cb) and len(ca) == 8


def test_rw_conductances_wrapper(rng, triangle):
    tr = rw_conductances(triangle, None, 1, 5, rng)
    assert tr.vertices[0] == 1 and len(tr.vertices) == 6
    assert tr.local_times.sum() == 5


def test_beta_walk_shapes(rng, triangle):
    assert beta_walk_paths(triangle, 0, 4, 10, rng).shape == (10, 5)


def test_path_distribution_point_masses(rng):
    det = path_distribution(lambda r, n, k: np.tile([0, 1, 0], (n, 1)), 2, 50, rng)
    assert det == {(0, 1, 0): 50}
    walk = path_distribution(lambda r, n, k: conductance_walk_paths(EDGE, 1.0, 0, k, n, r), 2, 50, rng)
    assert walk == {(0, 1, 0): 50}
    assert merge_counts([det, walk])[(0, 1, 0)] == 100


def test_path_distribution_shape_check(rng):
    with pytest.raises(ValueError):
        path_distribution(lambda r, n, k: np.zeros((n, k)), 2, 5, rng)


def test_bad_arguments(rng, triangle):
    with pytest.raises(ValueError):
        errw_paths(triangle, 1.0, 5, 3, 1, rng)
    with pytest.raises(ValueError):
        errw_paths(triangle, [1.0, -1.0, 1.0], 0, 3, 1, rng)
    with pytest.raises(ValueError):
        vrjp_paths(triangle, [1.0, 1.0], 0, 3, 1, rng)
