"""Image similarity: MSE, dynamic-range PSNR and global SSIM.

PSNR uses the pooled range max{G, H} - min{G, H} of the two images as its
peak, and SSIM is a single statistic over the whole image (no window), with
population (1/n) moments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRange, DimensionMismatch, ValidationError


def _pair(g, h) -> tuple[np.ndarray, np.ndarray]:
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    if g.shape != h.shape:
        raise DimensionMismatch(f"image shapes differ: {g.shape} vs {h.shape}")
    if g.size < 1:
        raise DimensionMismatch("images are empty")
    return g.ravel(), h.ravel()


def pooled_range(g, h) -> float:
    g, h = _pair(g, h)
    return float(max(g.max(), h.max()) - min(g.min(), h.min()))


def mse(g, h) -> float:
    g, h = _pair(g, h)
    d = g - h
    return float(np.mean(d * d))


def psnr(g, h) -> float:
    """10 log10(range^2 / MSE); ``inf`` when the images coincide."""
    rng = pooled_range(g, h)
    if rng == 0:
        raise DegenerateRange("both images are the same constant; PSNR undefined")
    err = mse(g, h)
    if err == 0:
        return math.inf
    return 10.0 * math.log10(rng * rng / err)


def default_constants(g, h) -> tuple[float, float]:
    """(0.01 R)^2 and (0.03 R)^2 with R the pooled range.

    R falls back to 1 when the range is zero or so small that the squares
    underflow, since the constants must stay positive.
    """
    r = pooled_range(g, h)
    if not (0.01 * r) ** 2 > 0:
        r = 1.0
    return (0.01 * r) ** 2, (0.03 * r) ** 2


def ssim(g, h, c1: float | None = None, c2: float | None = None) -> float:
    g, h = _pair(g, h)
    if c1 is None or c2 is None:
        d1, d2 = default_constants(g, h)
        c1 = d1 if c1 is None else c1
        c2 = d2 if c2 is None else c2
    if not (c1 > 0 and c2 > 0):
        raise ValidationError("SSIM constants must be positive")
    mg, mh = g.mean(), h.mean()
    vg = np.mean((g - mg) ** 2)
    vh = np.mean((h - mh) ** 2)
    cov = np.mean((g - mg) * (h - mh))
    # Two separate ratios keep tiny-range images clear of 0/0 underflow.
    luminance = (2 * mg * mh + c1) / (mg * mg + mh * mh + c1)
    structure = (2 * cov + c2) / (vg + vh + c2)
    return float(luminance * structure)


@dataclass(frozen=True)
class MetricReport:
    mse: float
    psnr: float
    ssim: float
    c1: float
    c2: float
    space: str = "latent"

    def to_dict(self) -> dict:
        return {
            "space": self.space,
            "mse": self.mse,
            "psnr": "inf" if math.isinf(self.psnr) else self.psnr,
            "ssim": self.ssim,
            "c1": self.c1,
            "c2": self.c2,
        }


def evaluate(g, h, c1: float | None = None, c2: float | None = None, space: str = "latent") -> MetricReport:
    d1, d2 = default_constants(g, h)
    c1 = d1 if c1 is None else c1
    c2 = d2 if c2 is None else c2
    return MetricReport(mse(g, h), psnr(g, h), ssim(g, h, c1, c2), c1, c2, space)
