import numpy as np
import pytest

from conftest import dense_icar, gaussian_posterior, scalar_fixed_theta
from poisson_inla.errors import InvalidConfig
from poisson_inla.gmrf import GridGraph
from poisson_inla.imaging import ContrastParams, corrupt_poisson, intensity_forward, smooth_test_image
from poisson_inla.inla import InlaConfig, LogNormalPrior, run_inla
from poisson_inla.likelihood import GaussianLikelihood
from poisson_inla.mcmc import SAMPLER_NAME, ChainConfig, ChainSummary, eap_from_chain, run_chain


@pytest.fixture(scope="module")
def scalar_chain():
    cfg = ChainConfig(steps=205_000, burn_in=5_000, step_size=0.5, seed=0, theta=(1.0, 1.0),
                      hist_bins=4000, hist_range=(0.0, 8.0))
    return run_chain(GridGraph(1, 1), [1], cfg)


def test_scalar_fixed_theta_mean(scalar_chain):
    expected, _, _ = scalar_fixed_theta(1, 1.0)
    assert scalar_chain.n_retained == 200_000
    assert abs(scalar_chain.mean[0] - expected) <= 0.01


def test_scalar_ks_against_quadrature(scalar_chain):
    _, xs, cdf = scalar_fixed_theta(1, 1.0)
    edges = scalar_chain.hist_edges
    ecdf = np.concatenate([[0.0], np.cumsum(scalar_chain.hist_counts[0])]) / scalar_chain.n_retained
    # Nearly all the mass must sit inside the histogram range for the edge check to mean anything.
    assert scalar_chain.hist_counts[0, -1] < 0.001 * scalar_chain.n_retained
    ks = np.max(np.abs(ecdf[:-1] - np.interp(edges[:-1], xs, cdf)))
    assert ks <= 0.01


def test_histogram_mass_equals_retained(scalar_chain):
    assert scalar_chain.hist_counts.sum() == scalar_chain.n_retained
    assert 0.4 <= scalar_chain.acceptance_rate <= 0.8
    assert scalar_chain.sampler == SAMPLER_NAME


@pytest.mark.slow
def test_gaussian_4x4_matches_closed_form():
    rng = np.random.default_rng(5)
    g = GridGraph(4, 4)
    y = rng.normal(3.0, 1.0, size=16)
    lik = GaussianLikelihood(y, 0.5)
    cfg = ChainConfig(steps=500_000, burn_in=10_000, step_size=0.5, seed=3, theta=(0.8, 0.5))
    s = run_chain(g, lik, cfg)
    mean, var = gaussian_posterior(dense_icar(4, 4, 0.8, 0.5), y, 0.5)
    assert np.max(np.abs(s.mean - mean)) <= 0.02
    np.testing.assert_allclose(s.variance, var, rtol=0.05)


def _small_cfg(**kw):
    base = dict(steps=3000, burn_in=1000, step_size=0.2, seed=42, theta=(2.0, 0.3))
    base.update(kw)
    return ChainConfig(**base)


def _counts(rows=5, cols=5, seed=1):
    return np.random.default_rng(seed).poisson(8.0, size=rows * cols)


def test_same_seed_bit_identical():
    g, y = GridGraph(5, 5), _counts()
    a, b = run_chain(g, y, _small_cfg()), run_chain(g, y, _small_cfg())
    assert np.array_equal(a.mean, b.mean)
    assert np.array_equal(a.variance, b.variance)
    assert np.array_equal(a.hist_counts, b.hist_counts)
    assert a.acceptance_rate == b.acceptance_rate and a.step_size == b.step_size
    assert a.config == b.config
    c = run_chain(g, y, _small_cfg(seed=43))
    assert not np.array_equal(a.mean, c.mean)


@pytest.mark.parametrize("counts_seed, rate", [(1, 8.0), (2, 2.0), (3, 25.0)])
def test_adapted_acceptance_in_band(counts_seed, rate):
    g = GridGraph(6, 6)
    y = np.random.default_rng(counts_seed).poisson(rate, size=36)
    s = run_chain(g, y, ChainConfig(steps=6000, burn_in=3000, step_size=1.0, seed=counts_seed, theta=(1.0, 0.2)))
    assert 0.4 <= s.acceptance_rate <= 0.8
    assert s.n_retained == 3000
    assert np.all(s.hist_counts.sum(axis=1) == 3000)
    assert np.all(s.mean > 0)


def test_theta_sampling_mode_runs():
    g, y = GridGraph(4, 4), _counts(4, 4)
    s = run_chain(g, y, _small_cfg(theta_mode="sample", prior=LogNormalPrior()))
    assert s.theta_mean is not None and all(t > 0 for t in s.theta_mean)
    assert 0.0 <= s.theta_acceptance <= 1.0
    assert s.config["theta_mode"] == "sample"
    fixed = run_chain(g, y, _small_cfg())
    assert fixed.theta_mean is None and fixed.theta_acceptance is None


def test_eap_from_samples_examples():
    const = ChainSummary.from_samples(np.full((10, 4), 7.25))
    np.testing.assert_array_equal(eap_from_chain(const), np.full(4, 7.25))
    two = ChainSummary.from_samples([1.0, 3.0])
    assert eap_from_chain(two)[0] == 2.0
    assert two.hist_counts.sum() == two.n_retained == 2


def test_histogram_csv_columns():
    s = ChainSummary.from_samples([[1.0, 2.0], [3.0, 4.0]], edges=[0.0, 2.5, 5.0])
    lines = s.histogram_csv().splitlines()
    assert lines[0] == "pixel_index,bin_left,bin_right,count"
    assert lines[1:] == ["0,0.0,2.5,1", "0,2.5,5.0,1", "1,0.0,2.5,1", "1,2.5,5.0,1"]
    assert s.histogram_csv(pixels=[1], index_column="pixel").splitlines()[0].startswith("pixel,")


@pytest.mark.parametrize("kw", [
    dict(burn_in=3000),
    dict(burn_in=-1),
    dict(step_size=0.0),
    dict(theta_mode="joint"),
    dict(theta=None),
    dict(theta=(-1.0, 1.0)),
    dict(theta_every=0),
    dict(init="prior"),
    dict(seed=-1),
])
def test_invalid_config(kw):
    with pytest.raises(InvalidConfig):
        run_chain(GridGraph(2, 2), [1, 2, 3, 4], _small_cfg(**kw))


def test_data_grid_mismatch():
    with pytest.raises(InvalidConfig):
        run_chain(GridGraph(2, 2), [1, 2, 3], _small_cfg())


def test_long_chain_agrees_with_inla_on_8x8():
    # Cross-method consistency on a smooth 8x8 field; both sides integrate theta
    # under the same log-normal hyperprior.
    field, _, _ = intensity_forward(smooth_test_image(8), ContrastParams(2.0, 25.0))
    y = corrupt_poisson(field, seed=11).ravel()
    g = GridGraph(8, 8)
    prior = LogNormalPrior()
    res = run_inla(g, y, InlaConfig(strategy="ccd", prior=prior))
    chain = run_chain(g, y, ChainConfig(steps=60_000, burn_in=10_000, step_size=0.3, seed=0,
                                        theta=tuple(res.theta_mode), theta_mode="sample", prior=prior))
    mae = float(np.mean(np.abs(chain.mean - res.marginals.eap)))
    assert mae <= 0.1
