import math

import numpy as np
import pytest
from scipy import integrate, stats

from vrjplab.betafield import (
    elimination_steps,
    green,
    h_from_beta,
    nu_log_density,
    sample_beta,
    sample_gig_half,
)
from vrjplab.stats import estimate

W2 = np.array([[0.0, 1.0], [1.0, 0.0]])
W_PATH = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 2.0], [0.0, 2.0, 0.0]])


def recip_cdf(rate, inv_coeff):
    """CDF of ``1/h`` when ``h`` has density ~ h^{-1/2} exp(-(rate h + inv_coeff / h) / 2)."""
    mean, shape = math.sqrt(rate / inv_coeff), rate
    return stats.invgauss(mu=mean / shape, scale=shape).cdf


def test_one_point_density():
    got = nu_log_density(np.zeros((1, 1)), [0.0], [0.5])
    assert got == pytest.approx(0.5 * math.log(2 / math.pi) - 0.5)


def test_off_support_density():
    assert nu_log_density(np.zeros((1, 1)), [0.0], [-1.0]) == -math.inf
    assert nu_log_density(W2, [0.0, 0.0], [0.2, 0.2]) == -math.inf


def test_two_point_density():
    got = nu_log_density(W2, [0.0, 0.0], [1.0, 1.0])
    assert got == pytest.approx(math.log(2 / math.pi) - 1.0 - 0.5 * math.log(3))


@pytest.mark.parametrize("eta", [(0.0, 0.0), (0.7, 0.2)])
def test_two_point_density_normalised(eta):
    def f(b2, b1):
        return math.exp(nu_log_density(W2, eta, [b1, b2])) if 4 * b1 * b2 > 1 else 0.0

    total, _ = integrate.dblquad(lambda b2, b1: f(b2, b1), 0, 60, lambda b1: 1 / (4 * b1), 60,
                                 epsabs=1e-7)
    assert total == pytest.approx(1.0, abs=2e-3)


def test_h_and_green():
    np.testing.assert_allclose(h_from_beta(np.zeros((1, 1)), [0.5]), [[1.0]])
    h = h_from_beta(W2, [1.0, 1.0])
    np.testing.assert_allclose(h, [[2, -1], [-1, 2]])
    np.testing.assert_allclose(green(h), np.array([[2, 1], [1, 2]]) / 3, rtol=1e-14)


def test_gig_gamma_case(rng):
    h = sample_gig_half(1.0, 0.0, rng, size=100_000)
    assert stats.kstest(h, stats.gamma(a=0.5, scale=2.0).cdf).pvalue > 1e-3
    assert estimate(h).within(1.0, 3)


def test_gig_inverse_mean(rng):
    h = sample_gig_half(1.0, 4.0, rng, size=100_000)
    assert estimate(1 / h).within(0.5, 3)


@pytest.mark.parametrize("rate, inv_coeff", [(1.0, 4.0), (3.0, 0.25), (0.2, 9.0)])
def test_gig_reciprocal_is_inverse_gaussian(rng, rate, inv_coeff):
    h = sample_gig_half(rate, inv_coeff, rng, size=50_000)
    assert (h > 0).all()
    assert stats.kstest(1 / h, recip_cdf(rate, inv_coeff)).pvalue > 1e-3


def test_gig_rejects_bad_parameters(rng):
    with pytest.raises(ValueError):
        sample_gig_half(0.0, 1.0, rng)
    with pytest.raises(ValueError):
        sample_gig_half(1.0, -1.0, rng)


def test_one_point_beta(rng):
    s = sample_beta(np.zeros((1, 1)), None, rng, size=100_000)
    assert estimate(2 * s.beta[:, 0]).within(1.0, 3)


def test_two_point_gamma_statistic(rng):
    s = sample_beta(W2, None, rng, size=100_000)
    b1, b2 = s.beta.T
    gamma = (4 * b1 * b2 - 1) / (0.5 + 0.5 * b1 + 0.5 * b2)
    assert stats.kstest(gamma, stats.gamma(a=0.5, scale=2.0).cdf).pvalue > 1e-3


def test_path_endpoint_marginal(rng):
    s = sample_beta(W_PATH, None, rng, size=100_000)
    two_b0 = 2 * s.beta[:, 0]
    assert stats.kstest(1 / two_b0, recip_cdf(1.0, 1.0)).pvalue > 1e-3
    two_b2 = 2 * s.beta[:, 2]
    assert stats.kstest(1 / two_b2, recip_cdf(1.0, 4.0)).pvalue > 1e-3


def test_elimination_order_does_not_matter(rng):
    a = sample_beta(W_PATH, [0.3, 0.0, 0.1], np.random.default_rng(1), size=50_000)
    b = sample_beta(W_PATH, [0.3, 0.0, 0.1], np.random.default_rng(2), size=50_000, order=[2, 0, 1])
    for k in range(3):
        assert stats.ks_2samp(a.beta[:, k], b.beta[:, k]).pvalue > 1e-3


def test_samples_are_on_support(rng):
    s = sample_beta(W_PATH, None, rng, size=2_000)
    g = s.green()
    assert (g > 0).all()
    np.testing.assert_allclose(s.log_det(), np.linalg.slogdet(s.h())[1], rtol=1e-8, atol=1e-7)


def test_batched_weights(rng):
    ws = np.stack([W2, 3 * W2])
    s = sample_beta(ws, None, rng)
    assert s.beta.shape == (2, 2)
    assert np.isfinite(s.log_det()).all()


def test_elimination_replay():
    beta = np.array([1.0, 1.5, 2.5])
    steps = list(elimination_steps(W_PATH, [0.0, 0.0, 0.0], beta))
    assert [s.pivot for s in steps] == [0, 1, 2]
    # first pivot sees its full neighbour weight
    assert steps[0].eta_eff == pytest.approx(1.0)
    pivots = [2 * beta[s.pivot] - s.self_weight for s in steps]
    assert np.prod(pivots) == pytest.approx(np.linalg.det(h_from_beta(W_PATH, beta)))


def test_bad_inputs(rng):
    with pytest.raises(ValueError):
        sample_beta(W2, [-1.0, 0.0], rng)
    with pytest.raises(ValueError):
        sample_beta(W2, [0.0, 0.0, 0.0], rng)
    with pytest.raises(ValueError):
        sample_beta(W2, None, rng, order=[0, 0])
