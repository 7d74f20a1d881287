"""Observation models: Poisson counts with identity link, plus a Gaussian
model used only to check the pipeline against closed-form answers."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from .errors import DimensionMismatch, InvalidVariance, NonPositiveRate, ValidationError

LOG_2PI = math.log(2.0 * math.pi)


def as_counts(y) -> np.ndarray:
    """Validate a photon-count field and return it as a flat int64 array."""
    arr = np.asarray(y)
    if arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise ValidationError("counts must be integral")
    elif arr.dtype.kind not in "iub":
        raise ValidationError(f"counts must be numeric, got dtype {arr.dtype}")
    arr = arr.astype(np.int64).ravel()
    if np.any(arr < 0):
        raise ValidationError("counts must be non-negative")
    return arr


def log_factorial(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    out = np.zeros(y.shape)
    big = y >= 2
    out[big] = gammaln(y[big] + 1.0)
    return out


def _check_rates(x: np.ndarray, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != n:
        raise DimensionMismatch(f"latent field has {x.size} values, expected {n}")
    if not np.all(x > 0):
        bad = int(np.argmin(x))
        raise NonPositiveRate(f"rate at pixel {bad} is {x[bad]!r}; rates must be > 0")
    return x


def poisson_loglik(y, x) -> float:
    """sum_i (y_i ln x_i - x_i - ln y_i!), summed with correctly rounded fsum."""
    y = as_counts(y)
    x = _check_rates(x, y.size)
    terms = y * np.log(x) - x - log_factorial(y)
    return math.fsum(terms)


def poisson_grad_hess(y, x) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel derivative y/x - 1 and second derivative -y/x^2."""
    y = as_counts(y)
    x = _check_rates(x, y.size)
    ratio = y / x
    return ratio - 1.0, -ratio / x


def gaussian_loglik(y, x, obs_var: float) -> float:
    """sum_i ln N(y_i | x_i, obs_var)."""
    if not obs_var > 0:
        raise InvalidVariance(f"observation variance must be > 0, got {obs_var!r}")
    y = np.asarray(y, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    if x.size != y.size:
        raise DimensionMismatch(f"field sizes differ: {y.size} vs {x.size}")
    r = y - x
    terms = -0.5 * (LOG_2PI + math.log(obs_var)) - 0.5 * r * r / obs_var
    return math.fsum(terms)


class PoissonLikelihood:
    """Poisson(y_i | x_i) with the rate itself as the latent value.

    The latent field is restricted to the positive orthant; ``positive``
    tells the Newton solver to keep iterates above its floor.
    """

    positive = True
    name = "poisson"

    def __init__(self, y):
        self.y = as_counts(y)
        self.n = self.y.size
        self._lfact = log_factorial(self.y)

    def loglik(self, x) -> float:
        x = _check_rates(x, self.n)
        return math.fsum(self.y * np.log(x) - x - self._lfact)

    def grad_hess(self, x):
        x = _check_rates(x, self.n)
        ratio = self.y / x
        return ratio - 1.0, -ratio / x

    def initial(self) -> np.ndarray:
        return np.maximum(self.y.astype(float), 0.5)


class GaussianLikelihood:
    """N(y_i | x_i, obs_var); test-only, the Laplace step is exact for it."""

    positive = False
    name = "gaussian"

    def __init__(self, y, obs_var: float):
        if not obs_var > 0:
            raise InvalidVariance(f"observation variance must be > 0, got {obs_var!r}")
        self.y = np.asarray(y, dtype=float).ravel()
        self.n = self.y.size
        self.obs_var = float(obs_var)

    def loglik(self, x) -> float:
        return gaussian_loglik(self.y, x, self.obs_var)

    def grad_hess(self, x):
        x = np.asarray(x, dtype=float).ravel()
        return (self.y - x) / self.obs_var, np.full(self.n, -1.0 / self.obs_var)

    def initial(self) -> np.ndarray:
        return self.y.copy()
