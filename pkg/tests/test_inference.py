"""Quadrature and sampler checks against closed-form normal references."""
import numpy as np
import pytest
from scipy import stats

from titepk.inference import (InitializationError, MCMCConfig, Quadrature,
                              QuadratureConfig, WidenRangeError, integrate,
                              sample, split_rhat)


def _std_normal(x):
    return -0.5 * np.sum(np.asarray(x) ** 2, axis=-1)


@pytest.fixture(scope="module")
def quad_n01():
    return integrate(_std_normal, 1, QuadratureConfig(), center=0.0, sd=1.0)


def test_quadrature_tail_mass(quad_n01):
    # P(X > 1.2816) for a standard normal
    expected = stats.norm.sf(1.2816)
    assert quad_n01.mass_above(1.2816) == pytest.approx(expected, abs=1e-6)
    assert quad_n01.cdf(0.0) == pytest.approx(0.5, abs=1e-9)
    assert quad_n01.mass_between(-1.0, 1.0) == pytest.approx(
        stats.norm.cdf(1.0) - stats.norm.cdf(-1.0), abs=1e-6)


def test_quadrature_quantiles(quad_n01):
    assert float(quad_n01.quantile(0.5)) == pytest.approx(0.0, abs=1e-8)
    assert float(quad_n01.quantile(0.9)) == pytest.approx(
        stats.norm.ppf(0.9), abs=1e-5)
    qs = quad_n01.quantile([0.025, 0.975])
    assert np.allclose(qs, stats.norm.ppf([0.025, 0.975]), atol=1e-5)


def test_quadrature_expectation(quad_n01):
    g = quad_n01.grid
    assert quad_n01.expect(g) == pytest.approx(0.0, abs=1e-10)
    assert quad_n01.expect(g**2) == pytest.approx(1.0, abs=1e-6)


def test_quadrature_2d_marginals():
    quad = integrate(_std_normal, 2, QuadratureConfig(node_budget=301 * 301),
                     center=[0.0, 0.0], sd=[1.0, 1.0])
    assert quad.weights.sum() == pytest.approx(1.0, abs=1e-12)
    # smooth functionals converge fast on the grid ...
    g1, g2 = quad.nodes
    assert quad.expect(g1**2 + g2**2) == pytest.approx(2.0, abs=1e-6)
    # ... indicator functionals only at O(cell width)
    inside = (np.abs(g1) <= 1.0) & (np.abs(g2) <= 1.0)
    expected = (stats.norm.cdf(1) - stats.norm.cdf(-1)) ** 2
    assert quad.weights[inside].sum() == pytest.approx(expected, abs=0.02)


def test_widen_range_error():
    # nearly all mass outside the grid
    with pytest.raises(WidenRangeError):
        integrate(lambda x: -0.5 * np.sum(((np.asarray(x) - 40.0) / 0.1) ** 2,
                                          axis=-1),
                  1, QuadratureConfig(range_sd=2.0), center=0.0, sd=1.0)


def test_mcmc_recovers_normal():
    cfg = MCMCConfig(seed=7, chains=8, warmup=800, samples=1500)
    draws = sample(_std_normal, 1, cfg)
    n = draws.samples.shape[0]
    assert draws.converged and np.all(draws.rhat < 1.05)
    # random-walk autocorrelation inflates the naive MC error; allow 25x
    assert abs(float(np.mean(draws.samples))) < 4 * 25 / np.sqrt(n)
    assert float(np.std(draws.samples)) == pytest.approx(1.0, abs=0.05)
    assert 0.1 < draws.accept_rate < 0.75


def test_mcmc_deterministic_given_seed():
    cfg = MCMCConfig(seed=123, chains=4, warmup=300, samples=400)
    a = sample(_std_normal, 2, cfg)
    b = sample(_std_normal, 2, cfg)
    assert np.array_equal(a.samples, b.samples)
    c = sample(_std_normal, 2, MCMCConfig(seed=124, chains=4, warmup=300,
                                          samples=400))
    assert not np.array_equal(a.samples, c.samples)


def test_mcmc_initialization_error():
    with pytest.raises(InitializationError):
        sample(lambda x: np.full(np.asarray(x).shape[0], -np.inf), 1,
               MCMCConfig(seed=1, chains=2, warmup=100, samples=100))


def test_config_validation():
    with pytest.raises(ValueError):
        MCMCConfig(seed=0, chains=0)
    with pytest.raises(ValueError):
        MCMCConfig(seed=0, target_accept=1.5)
    with pytest.raises(ValueError):
        QuadratureConfig(node_budget=4)
    with pytest.raises(ValueError):
        QuadratureConfig(rel_tol=-1.0)


def test_split_rhat_detects_disagreement(rng):
    iid = rng.standard_normal((4, 1000))
    assert split_rhat(iid) < 1.02
    shifted = iid.copy()
    shifted[0] += 3.0
    assert split_rhat(shifted) > 1.5
    # within-chain trend (first half vs second half) is also caught
    trending = rng.standard_normal((4, 1000)) + np.linspace(0, 3, 1000)
    assert split_rhat(trending) > 1.1


def test_quadrature_cell_mass_sums_to_one(quad_n01):
    assert quad_n01.weights.sum() == pytest.approx(1.0, abs=1e-12)
