import numpy as np
import pytest
from scipy import integrate, stats

from vrjplab.betafield import green, h_from_beta, sample_beta
from vrjplab.electrical import (
    effective_conductance,
    effective_weight,
    effective_weight_schur,
    laplacian,
    psi_ratio,
    solve_potential,
    z_law_cdf,
    z_law_density,
)
from vrjplab.graphs import build_graph, lattice_box

W2 = np.array([[0.0, 1.7], [1.7, 0.0]])


def test_series(path3):
    assert effective_conductance(path3, None, 0, 2) == pytest.approx(0.5, abs=1e-12)


def test_triangle_edge(triangle):
    assert effective_conductance(triangle, None, 0, 1) == pytest.approx(1.5, abs=1e-12)


def test_four_cycle_opposite(four_cycle):
    assert effective_conductance(four_cycle, None, 0, 2) == pytest.approx(1.0, abs=1e-12)


def test_k4():
    k4 = build_graph(4, [(i, j, 1.0) for i in range(4) for j in range(i + 1, 4)])
    assert effective_conductance(k4, None, 0, 1) == pytest.approx(2.0, abs=1e-12)


def test_energy_equals_conductance(rng):
    g = lattice_box(2, 4, 1.0)
    c = rng.uniform(0.2, 3.0, g.n_edges)
    sol = solve_potential(g, c, 0, 15)
    assert sol.energy == pytest.approx(sol.c_eff, rel=1e-12)
    assert sol.residual < 1e-12
    assert 0 <= sol.potential.min() and sol.potential.max() <= 1


def test_custom_conductances_scale(triangle):
    assert effective_conductance(triangle, 3.0, 0, 1) == pytest.approx(4.5)
    with pytest.raises(ValueError):
        effective_conductance(triangle, [1.0, -1.0, 1.0], 0, 1)
    with pytest.raises(ValueError):
        effective_conductance(triangle, None, 1, 1)


def test_laplacian_rows_sum_to_zero(four_cycle):
    assert np.abs(laplacian(four_cycle).sum(axis=1)).max() == 0


def test_two_vertex_weight_is_exact(rng):
    s = sample_beta(W2, None, rng, size=100)
    np.testing.assert_allclose(effective_weight(s.green(), 0, 1), 1.7, rtol=1e-12)


def test_path_weight_matches_schur():
    w = np.array([[0.0, 1.3, 0.0], [1.3, 0.0, 0.4], [0.0, 0.4, 0.0]])
    beta = np.array([1.0, 0.9, 0.6])
    h = h_from_beta(w, beta)
    got = effective_weight(green(h), 0, 2)
    assert got == pytest.approx(1.3 * 0.4 / (2 * 0.9), rel=1e-12)
    assert effective_weight_schur(w, h, 0, 2) == pytest.approx(got, rel=1e-12)


def test_weight_positive_on_connected_graph(rng):
    w = lattice_box(2, 3, 1.0).weight_matrix()
    s = sample_beta(w, None, rng, size=200)
    assert (effective_weight(s.green(), 0, 8) > 0).all()


def test_psi_two_point():
    g = green(h_from_beta(W2, [1.1, 0.8]))
    assert float(psi_ratio(g, 0, 1)) == pytest.approx(1.7 / 2.2)
    g = green(h_from_beta(W2, [1.3, 1.3]))
    assert float(psi_ratio(g, 0, 1)) == pytest.approx(1.7 / 2.6)
    assert float(psi_ratio(np.diag([2.0, 3.0]), 0, 1)) == 0.0


def test_z_density_at_one():
    assert float(z_law_density(2.5, 1.0)) == pytest.approx(np.sqrt(2.5 / (2 * np.pi)))


@pytest.mark.parametrize("w", [0.1, 1.0, 10.0])
def test_z_density_normalised(w):
    total, _ = integrate.quad(lambda z: float(z_law_density(w, z)), 0, np.inf, limit=400)
    assert total == pytest.approx(1.0, abs=1e-6)
    half, _ = integrate.quad(lambda z: float(z_law_density(w, z)), 0, 0.7, limit=200)
    assert float(z_law_cdf(w, 0.7)) == pytest.approx(half, abs=1e-8)


def test_psi_law_two_point(rng):
    s = sample_beta(W2, None, rng, size=100_000)
    psi = psi_ratio(s.green(), 0, 1)
    assert stats.kstest(psi, lambda z: z_law_cdf(1.7, z)).pvalue > 1e-3
