import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from poisson_inla.errors import DegenerateRange, DimensionMismatch, ValidationError
from poisson_inla.metrics import MetricReport, default_constants, evaluate, mse, psnr, ssim


def brute_mse(g, h):
    g, h = list(map(float, np.ravel(g))), list(map(float, np.ravel(h)))
    return math.fsum((a - b) ** 2 for a, b in zip(g, h)) / len(g)


def brute_psnr(g, h):
    vals = list(np.ravel(g)) + list(np.ravel(h))
    r = max(vals) - min(vals)
    return 10 * math.log10(r * r / brute_mse(g, h))


def brute_ssim(g, h, c1, c2):
    g, h = list(map(float, np.ravel(g))), list(map(float, np.ravel(h)))
    n = len(g)
    mg, mh = math.fsum(g) / n, math.fsum(h) / n
    vg = math.fsum((a - mg) ** 2 for a in g) / n
    vh = math.fsum((b - mh) ** 2 for b in h) / n
    cov = math.fsum((a - mg) * (b - mh) for a, b in zip(g, h)) / n
    return (2 * mg * mh + c1) * (2 * cov + c2) / ((mg * mg + mh * mh + c1) * (vg + vh + c2))


def test_mse_examples():
    assert mse([0, 2], [0, 0]) == 2.0
    assert mse([[1.5, 2.5]], [[1.5, 2.5]]) == 0.0


def test_psnr_examples():
    assert psnr([0, 1], [1, 0]) == pytest.approx(0.0, abs=1e-15)
    assert psnr([0, 2], [0, 0]) == pytest.approx(10 * math.log10(2), abs=1e-12)
    assert psnr([0, 2], [0, 0]) == pytest.approx(3.0103, abs=1e-4)
    assert psnr([3.0, 4.0], [3.0, 4.0]) == math.inf


def test_ssim_examples():
    assert ssim([1, 1, 1], [0, 0, 0], 0.01, 0.5) == pytest.approx(0.01 / 1.01, abs=1e-15)
    assert ssim([1, 1], [0, 0], 0.01, 123.0) == pytest.approx(0.009901, abs=1e-6)
    assert ssim([4.0, 1.0, 9.0], [4.0, 1.0, 9.0], 1e-4, 1e-4) == 1.0


@pytest.mark.parametrize("seed", range(20))
def test_against_brute_force(seed):
    r = np.random.default_rng(seed)
    shape = tuple(r.integers(1, 12, size=2))
    g = r.uniform(-50, 300, size=shape)
    h = g + r.normal(0, r.uniform(0.1, 40), size=shape)
    c1, c2 = r.uniform(1e-4, 10, size=2)
    assert mse(g, h) == pytest.approx(brute_mse(g, h), abs=1e-12, rel=1e-12)
    assert psnr(g, h) == pytest.approx(brute_psnr(g, h), abs=1e-12)
    assert ssim(g, h, c1, c2) == pytest.approx(brute_ssim(g, h, c1, c2), abs=1e-12)


pairs = st.integers(1, 40).flatmap(
    lambda n: st.tuples(
        arrays(np.float64, n, elements=st.floats(-1e4, 1e4)),
        arrays(np.float64, n, elements=st.floats(-1e4, 1e4)),
    )
)


@settings(max_examples=200, deadline=None)
@given(pairs, st.floats(1e-6, 1e3), st.floats(1e-6, 1e3))
def test_swap_symmetry_is_exact(pair, c1, c2):
    g, h = pair
    assert mse(g, h) == mse(h, g)
    assert ssim(g, h, c1, c2) == ssim(h, g, c1, c2)
    assert -1.0 - 1e-12 <= ssim(g, h, c1, c2) <= 1.0 + 1e-12
    if np.ptp(np.concatenate([g, h])) > 0:
        assert psnr(g, h) == psnr(h, g)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(2, 30), elements=st.floats(-1e3, 1e3)))
def test_self_similarity(g):
    if np.ptp(g) == 0:
        return
    assert ssim(g, g) == pytest.approx(1.0, abs=1e-12)
    assert psnr(g, g) == math.inf


def test_psnr_strictly_decreases_with_mse():
    # The pooled range stays [0, 10]; only the error grows.
    g = np.array([0.0, 10.0, 5.0, 5.0])
    values = [psnr(g, np.array([0.0, 10.0, 5.0 + e, 5.0 - e])) for e in (0.5, 1.0, 2.0, 4.0)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_degenerate_range():
    with pytest.raises(DegenerateRange):
        psnr([3.0, 3.0], [3.0, 3.0])


def test_dimension_mismatch():
    for fn in (mse, psnr, ssim):
        with pytest.raises(DimensionMismatch):
            fn(np.zeros((2, 2)), np.zeros(4))
    with pytest.raises(DimensionMismatch):
        mse([], [])


def test_ssim_constants_must_be_positive():
    with pytest.raises(ValidationError):
        ssim([1.0, 2.0], [2.0, 1.0], 0.0, 1.0)


def test_default_constants_and_report():
    assert default_constants([0, 200], [0, 0]) == pytest.approx((4.0, 36.0))
    assert default_constants([5, 5], [5, 5]) == pytest.approx((1e-4, 9e-4))
    rep = evaluate([0.0, 1.0, 2.0], [0.0, 1.0, 2.0])
    assert isinstance(rep, MetricReport)
    assert rep.to_dict() == {"space": "latent", "mse": 0.0, "psnr": "inf", "ssim": 1.0,
                             "c1": pytest.approx(4e-4), "c2": pytest.approx(36e-4)}
    rep = evaluate([0.0, 2.0], [0.0, 0.0], c1=0.5, c2=0.25, space="pixel")
    assert rep.psnr == pytest.approx(10 * math.log10(2))
    assert (rep.c1, rep.c2, rep.space) == (0.5, 0.25, "pixel")
