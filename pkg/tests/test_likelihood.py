import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm, poisson

from poisson_inla.errors import DimensionMismatch, InvalidVariance, NonPositiveRate, ValidationError
from poisson_inla.likelihood import (
    GaussianLikelihood,
    PoissonLikelihood,
    gaussian_loglik,
    poisson_grad_hess,
    poisson_loglik,
)


def test_poisson_loglik_examples():
    assert poisson_loglik([0], [2.0]) == pytest.approx(-2.0)
    assert poisson_loglik([1], [1.0]) == pytest.approx(-1.0)
    assert poisson_loglik([3], [2.0]) == pytest.approx(3 * math.log(2) - 2 - math.log(6), abs=1e-12)
    assert poisson_loglik([3], [2.0]) == pytest.approx(poisson.logpmf(3, 2.0), abs=1e-12)


def test_grad_hess_examples():
    g, h = poisson_grad_hess([4], [2.0])
    assert (g[0], h[0]) == (1.0, -1.0)
    g, h = poisson_grad_hess([0], [5.0])
    assert g[0] == -1.0 and h[0] == 0.0


@pytest.mark.parametrize("bad", [[0.0], [-1.0], [1.0, -0.5]])
def test_nonpositive_rate(bad):
    y = [1] * len(bad)
    with pytest.raises(NonPositiveRate):
        poisson_loglik(y, bad)
    with pytest.raises(NonPositiveRate):
        poisson_grad_hess(y, bad)


def test_count_validation():
    with pytest.raises(ValidationError):
        poisson_loglik([-1], [1.0])
    with pytest.raises(ValidationError):
        poisson_loglik([1.5], [1.0])
    with pytest.raises(DimensionMismatch):
        poisson_loglik([1, 2], [1.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 200), st.floats(0.5, 50.0)), min_size=1, max_size=30))
def test_derivatives_match_finite_differences(pairs):
    y = np.array([p[0] for p in pairs])
    x = np.array([p[1] for p in pairs])
    g, h = poisson_grad_hess(y, x)
    eps = 1e-5
    for i in range(y.size):
        up, dn = x.copy(), x.copy()
        up[i] += eps
        dn[i] -= eps
        fd = (poisson_loglik(y[i : i + 1], up[i : i + 1]) - poisson_loglik(y[i : i + 1], dn[i : i + 1])) / (2 * eps)
        assert abs(g[i] - fd) <= 1e-6 * max(1.0, abs(g[i]))
        gu, _ = poisson_grad_hess(y[i : i + 1], up[i : i + 1])
        gd, _ = poisson_grad_hess(y[i : i + 1], dn[i : i + 1])
        assert abs(h[i] - (gu[0] - gd[0]) / (2 * eps)) <= 1e-6 * max(1.0, abs(h[i]))
    assert np.all(h <= 0)
    assert np.all((h == 0) == (y == 0))
    total = poisson_loglik(y, x)
    assert total == math.fsum(poisson_loglik(y[i : i + 1], x[i : i + 1]) for i in range(y.size))
    np.testing.assert_allclose(total, poisson.logpmf(y, x).sum(), rtol=1e-12, atol=1e-9)


def test_large_counts_finite():
    assert math.isfinite(poisson_loglik([10**7], [10**7 + 0.5]))


def test_gaussian_loglik_examples(rng):
    x = rng.normal(size=5)
    assert gaussian_loglik(x, x, 1.0) == pytest.approx(-2.5 * math.log(2 * math.pi))
    assert gaussian_loglik([1.0], [0.0], 1.0) == pytest.approx(-1.418939, abs=1e-6)
    y = rng.normal(size=20)
    x = rng.normal(size=20)
    assert gaussian_loglik(y, x, 0.3) == pytest.approx(norm.logpdf(y, x, math.sqrt(0.3)).sum(), abs=1e-12)
    with pytest.raises(InvalidVariance):
        gaussian_loglik(y, x, 0.0)


def test_likelihood_objects():
    lik = PoissonLikelihood([0, 3, 7])
    np.testing.assert_array_equal(lik.initial(), [0.5, 3.0, 7.0])
    assert lik.loglik([1.0, 2.0, 3.0]) == pytest.approx(poisson_loglik([0, 3, 7], [1.0, 2.0, 3.0]))
    gl = GaussianLikelihood([1.0, 2.0], 0.5)
    g, h = gl.grad_hess([0.0, 0.0])
    np.testing.assert_allclose(g, [2.0, 4.0])
    np.testing.assert_allclose(h, [-2.0, -2.0])
    with pytest.raises(InvalidVariance):
        GaussianLikelihood([1.0], -1.0)
