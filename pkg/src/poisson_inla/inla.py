"""Hyperparameter posterior, its mode, integration points and mixed marginals.

Hyperparameters are handled in log coordinates ``eta = (ln sigma2, ln d)``.
Around the mode the standardized coordinates ``z`` satisfy
``eta(z) = eta* + V sqrt(Lambda) z`` where ``V Lambda V^T`` is the negative
inverse Hessian of the log posterior, so ``z`` has identity covariance when
the posterior is Gaussian.
"""
from __future__ import annotations

import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import EmptyPointSet, ExplosionGuard, IndefiniteHessian, InvalidConfig, NoConvergence
from .gmrf import GridGraph, IcarHyper
from .laplace import GaussianApprox, _as_likelihood, conditional_log_marginal_correction, gaussian_approx

log = logging.getLogger(__name__)

STRATEGIES = ("ccd", "grid", "eb", "fixed")


# ---------------------------------------------------------------------------
# hyperpriors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FlatPrior:
    """Flat density for sigma2 and d on [0, inf), written in log coordinates.

    The Jacobian of theta = exp(eta) turns the flat density into
    exp(eta_1 + eta_2).
    """

    name = "flat"

    def logpdf(self, eta) -> float:
        return float(eta[0] + eta[1])

    def to_dict(self) -> dict:
        return {"name": self.name}


@dataclass(frozen=True)
class LogNormalPrior:
    """Independent normal densities on ln sigma2 and ln d."""

    mean: tuple = (0.0, 0.0)
    sd: tuple = (1.0, 1.0)
    name = "lognormal"

    def __post_init__(self):
        if min(self.sd) <= 0:
            raise InvalidConfig("lognormal prior sd must be positive")

    def logpdf(self, eta) -> float:
        total = 0.0
        for e, m, s in zip(eta, self.mean, self.sd):
            u = (e - m) / s
            total += -0.5 * u * u - math.log(s) - 0.5 * math.log(2 * math.pi)
        return total

    def to_dict(self) -> dict:
        return {"name": self.name, "mean": list(self.mean), "sd": list(self.sd)}


def make_prior(spec) -> FlatPrior | LogNormalPrior:
    if spec is None or spec == "flat":
        return FlatPrior()
    if spec == "lognormal":
        return LogNormalPrior()
    if isinstance(spec, (FlatPrior, LogNormalPrior)):
        return spec
    if isinstance(spec, dict):
        name = spec.get("name", "flat")
        if name == "flat":
            return FlatPrior()
        if name == "lognormal":
            return LogNormalPrior(tuple(spec.get("mean", (0.0, 0.0))), tuple(spec.get("sd", (1.0, 1.0))))
    raise InvalidConfig(f"unknown hyperprior {spec!r}")


# ---------------------------------------------------------------------------
# hyperparameter posterior
# ---------------------------------------------------------------------------


class HyperPosterior:
    """ln p~(theta | y) evaluated through the Laplace approximation.

    Evaluations are memoized by log coordinates and may be requested from
    several threads at once.
    """

    def __init__(self, g: GridGraph, y, prior=None, *, ordering: str = "natural"):
        self.g = g
        self.lik = _as_likelihood(y)
        if self.lik.n != g.n:
            raise InvalidConfig(f"data has {self.lik.n} pixels, grid has {g.n}")
        self.prior = make_prior(prior)
        self.ordering = ordering
        self._cache: dict[tuple, tuple[float, GaussianApprox]] = {}
        self._lock = threading.Lock()
        self.n_evaluations = 0

    def evaluate(self, eta, x0=None) -> tuple[float, GaussianApprox]:
        key = tuple(float(e) for e in eta)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        h = IcarHyper.from_log(key)
        ga = gaussian_approx(self.g, h, self.lik, x0, ordering=self.ordering)
        value = self.prior.logpdf(key) + conditional_log_marginal_correction(ga, self.g, h, self.lik)
        with self._lock:
            self._cache.setdefault(key, (value, ga))
            self.n_evaluations += 1
            return self._cache[key]

    def __call__(self, eta, x0=None) -> float:
        return self.evaluate(eta, x0)[0]


def log_hyper_posterior(theta, g: GridGraph, y, prior=None) -> float:
    """Unnormalized ln p~(theta | y) at theta = (sigma2, d), log-coordinate density."""
    IcarHyper(*theta)
    return HyperPosterior(g, y, prior)(np.log(np.asarray(theta, dtype=float)))


# ---------------------------------------------------------------------------
# mode search
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HyperMode:
    eta_star: np.ndarray
    log_post: float
    hessian: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    approx: Any
    iterations: int
    grad_norm: float

    @property
    def theta_star(self) -> np.ndarray:
        return np.exp(self.eta_star)

    @property
    def z_scale(self) -> np.ndarray:
        """Columns map unit z steps to log-coordinate steps."""
        return self.eigvecs * np.sqrt(-1.0 / self.eigvals)

    def to_eta(self, z) -> np.ndarray:
        return self.eta_star + self.z_scale @ np.asarray(z, dtype=float)

    def to_z(self, eta) -> np.ndarray:
        return np.linalg.solve(self.z_scale, np.asarray(eta, dtype=float) - self.eta_star)


def _fd_gradient(f, eta, step, f_kw):
    k = eta.size
    grad = np.empty(k)
    for i in range(k):
        e = np.zeros(k)
        e[i] = step
        grad[i] = (f(eta + e, **f_kw) - f(eta - e, **f_kw)) / (2 * step)
    return grad


def fd_hessian(f, eta, step: float = 1e-3, f0=None, f_kw=None) -> np.ndarray:
    """Central second differences, symmetrized."""
    f_kw = f_kw or {}
    eta = np.asarray(eta, dtype=float)
    k = eta.size
    f0 = f(eta, **f_kw) if f0 is None else f0
    hess = np.empty((k, k))
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = step
        hess[i, i] = (f(eta + ei, **f_kw) - 2 * f0 + f(eta - ei, **f_kw)) / step**2
        for j in range(i + 1, k):
            ej = np.zeros(k)
            ej[j] = step
            hess[i, j] = (
                f(eta + ei + ej, **f_kw) - f(eta + ei - ej, **f_kw)
                - f(eta - ei + ej, **f_kw) + f(eta - ei - ej, **f_kw)
            ) / (4 * step**2)
            hess[j, i] = hess[i, j]
    return 0.5 * (hess + hess.T)


def _safe(posterior, eta, x0):
    try:
        value, ga = posterior.evaluate(eta, x0)
    except (NoConvergence, ArithmeticError, ValueError):
        return -math.inf, None
    if not math.isfinite(value):
        return -math.inf, None
    return value, ga


def find_mode(
    posterior,
    theta_init=(1.0, 1.0),
    *,
    fd_step: float = 1e-4,
    hess_step: float = 1e-3,
    gtol: float = 1e-5,
    max_iter: int = 200,
    max_step: float = 1.0,
) -> HyperMode:
    """Maximize ln p~(theta | y) over log coordinates by BFGS.

    Gradients are central finite differences with step ``fd_step``; the
    curvature at the optimum uses step ``hess_step``.

    Raises:
        NoConvergence: ``max_iter`` exhausted or the line search stalled
            before the gradient tolerance was met.
        IndefiniteHessian: the curvature at the returned point is not
            negative definite.
    """
    theta_init = np.asarray(theta_init, dtype=float)
    if np.any(theta_init <= 0):
        raise InvalidConfig(f"theta_init must be positive, got {theta_init}")
    eta = np.log(theta_init)
    k = eta.size
    f0, ga = _safe(posterior, eta, None)
    if not math.isfinite(f0):
        raise NoConvergence("log posterior not finite at the starting point", theta=theta_init)

    def f(e, warm=None):
        return _safe(posterior, e, warm)[0]

    warm = ga.mode
    grad = _fd_gradient(f, eta, fd_step, {"warm": warm})
    hinv = np.eye(k)
    it = 0
    stalled = False
    for it in range(1, max_iter + 1):
        if not np.all(np.isfinite(grad)):
            raise NoConvergence("non-finite gradient of the log posterior", theta=np.exp(eta))
        if np.max(np.abs(grad)) <= gtol:
            break
        direction = hinv @ grad
        slope = float(direction @ grad)
        if slope <= 0:
            hinv = np.eye(k)
            direction = grad.copy()
            slope = float(direction @ grad)
        norm = np.linalg.norm(direction)
        if norm > max_step:
            direction *= max_step / norm
            slope *= max_step / norm
        alpha = 1.0
        for _ in range(40):
            cand = eta + alpha * direction
            fc, gc = _safe(posterior, cand, warm)
            if fc >= f0 + 1e-4 * alpha * slope:
                break
            alpha *= 0.5
        else:
            stalled = True
            break
        s = cand - eta
        new_grad = _fd_gradient(f, cand, fd_step, {"warm": gc.mode})
        yv = grad - new_grad  # gradient change of the negated objective
        sy = float(s @ yv)
        if it == 1 and sy > 0:
            hinv = np.eye(k) * sy / float(yv @ yv)
        if sy > 1e-12:
            rho = 1.0 / sy
            eye = np.eye(k)
            hinv = (eye - rho * np.outer(s, yv)) @ hinv @ (eye - rho * np.outer(yv, s)) + rho * np.outer(s, s)
        eta, f0, ga, grad, warm = cand, fc, gc, new_grad, gc.mode
    gnorm = float(np.max(np.abs(grad)))

    if gnorm > gtol:
        # Polish with Newton steps on the finite-difference curvature.
        for _ in range(10):
            hess = fd_hessian(f, eta, hess_step, f0, {"warm": warm})
            if np.any(np.linalg.eigvalsh(hess) >= 0):
                break
            step = -np.linalg.solve(hess, grad)
            cand = eta + step
            fc, gc = _safe(posterior, cand, warm)
            if not fc >= f0 - 1e-9 * max(1.0, abs(f0)):
                break
            cand_grad = _fd_gradient(f, cand, fd_step, {"warm": gc.mode})
            if np.max(np.abs(cand_grad)) >= gnorm:
                break
            eta, f0, ga, grad, warm = cand, fc, gc, cand_grad, gc.mode
            gnorm = float(np.max(np.abs(grad)))
            if gnorm <= gtol:
                break
    if gnorm > gtol:
        reason = "line search stalled" if stalled else f"iteration cap {max_iter} reached"
        raise NoConvergence(f"hyperparameter mode search failed: {reason}, gradient {gnorm:.3e}", theta=np.exp(eta))

    hess = fd_hessian(f, eta, hess_step, f0, {"warm": warm})
    if not np.all(np.isfinite(hess)):
        raise IndefiniteHessian("non-finite Hessian at the mode")
    eigvals, eigvecs = np.linalg.eigh(hess)
    if np.any(eigvals >= 0):
        raise IndefiniteHessian(f"Hessian eigenvalues {eigvals} are not all negative at theta={np.exp(eta)}")
    # Fix eigenvector signs so the z frame is reproducible.
    for j in range(k):
        if eigvecs[np.argmax(np.abs(eigvecs[:, j])), j] < 0:
            eigvecs[:, j] *= -1
    return HyperMode(eta, f0, hess, eigvals, eigvecs, ga, it, gnorm)


# ---------------------------------------------------------------------------
# integration points
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HyperPoint:
    theta: np.ndarray
    eta: np.ndarray
    z: np.ndarray
    log_post: float
    weight: float
    approx: Any = field(default=None, repr=False)

    @property
    def mode(self) -> np.ndarray:
        return self.approx.mode

    @property
    def cond_variances(self) -> np.ndarray:
        return self.approx.cond_variances


def _evaluate_all(posterior, etas: Sequence[np.ndarray], warm, workers: int):
    def one(eta):
        return posterior.evaluate(eta, warm)

    if workers > 1 and len(etas) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, etas))
    return [one(e) for e in etas]


def _warm_start(mode: HyperMode):
    return getattr(mode.approx, "mode", None)


def explore_grid(
    mode: HyperMode,
    posterior,
    delta_z: float = 1.0,
    delta_pi: float = 2.5,
    *,
    max_points: int = 10_000,
    workers: int = 1,
) -> list[HyperPoint]:
    """Lattice points in z reachable from the mode along axis steps.

    A point is kept while its log posterior is within ``delta_pi`` of the
    mode value (strictly); neighbours of kept points are explored breadth
    first.
    """
    if not delta_z > 0 or not delta_pi > 0:
        raise InvalidConfig("delta_z and delta_pi must be positive")
    k = mode.eta_star.size
    weight = delta_z**k
    warm = _warm_start(mode)
    top = mode.log_post
    seen = {(0,) * k}
    frontier = [(0,) * k]
    kept: list[HyperPoint] = []
    while frontier:
        etas = [mode.to_eta(np.array(idx) * delta_z) for idx in frontier]
        results = _evaluate_all(posterior, etas, warm, workers)
        nxt = set()
        for idx, eta, (lp, ga) in zip(frontier, etas, results):
            if not top - lp < delta_pi and any(idx):
                continue
            kept.append(HyperPoint(np.exp(eta), eta, np.array(idx, dtype=float) * delta_z, lp, weight, ga))
            if len(kept) > max_points:
                raise ExplosionGuard(f"grid exploration exceeded {max_points} points")
            for axis in range(k):
                for sgn in (-1, 1):
                    nb = list(idx)
                    nb[axis] += sgn
                    nb = tuple(nb)
                    if nb not in seen:
                        seen.add(nb)
                        nxt.add(nb)
        frontier = sorted(nxt)
    kept.sort(key=lambda p: tuple(p.z))
    return kept


def ccd_design(f0: float = math.sqrt(2.0)) -> tuple[np.ndarray, np.ndarray]:
    """Two-dimensional central composite design in z and its design weights.

    Returns the 9 points (center, factorial corners, axial points) scaled by
    ``f0`` and weights chosen so that, after multiplication by a standard
    Gaussian density, the rule reproduces the Gaussian's total mass and its
    second moments.
    """
    if not f0 > 1:
        raise InvalidConfig(f"CCD scaling f0 must exceed 1, got {f0!r}")
    r = math.sqrt(2.0)
    unit = np.array(
        [[0, 0], [1, 1], [1, -1], [-1, 1], [-1, -1], [r, 0], [-r, 0], [0, r], [0, -r]],
        dtype=float,
    )
    pts = f0 * unit
    ring = pts.shape[0] - 1
    radius2 = 2.0 * f0 * f0
    # Effective (density-weighted) masses: ring * w_ring * radius2 / 2 = 1.
    w_ring = 1.0 / (ring * radius2 / 2.0)
    w_center = 1.0 - ring * w_ring
    weights = np.full(pts.shape[0], w_ring * math.exp(radius2 / 2.0))
    weights[0] = w_center
    return pts, weights


def explore_ccd(mode: HyperMode, posterior, f0: float = math.sqrt(2.0), *, workers: int = 1) -> list[HyperPoint]:
    pts, weights = ccd_design(f0)
    etas = [mode.to_eta(z) for z in pts]
    results = _evaluate_all(posterior, etas, _warm_start(mode), workers)
    return [
        HyperPoint(np.exp(eta), eta, z, lp, float(w), ga)
        for z, eta, w, (lp, ga) in zip(pts, etas, weights, results)
    ]


# ---------------------------------------------------------------------------
# mixture marginals
# ---------------------------------------------------------------------------


def normalized_weights(points: Sequence[HyperPoint]) -> np.ndarray:
    if not points:
        raise EmptyPointSet("no integration points")
    lp = np.array([p.log_post for p in points], dtype=float)
    if not np.all(np.isfinite(lp)):
        raise EmptyPointSet("integration point with non-finite log posterior")
    delta = np.array([p.weight for p in points], dtype=float)
    w = np.exp(lp - lp.max()) * delta
    return w / w.sum()


@dataclass(frozen=True, eq=False)
class PosteriorMarginals:
    """Per-pixel Gaussian mixtures over the integration points."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    eap: np.ndarray
    variance: np.ndarray
    points: tuple

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(self.variance)

    def density(self, pixel: int, abscissae) -> np.ndarray:
        x = np.asarray(abscissae, dtype=float)
        m = self.means[:, pixel][:, None]
        v = self.variances[:, pixel][:, None]
        comp = np.exp(-0.5 * (x[None, :] - m) ** 2 / v) / np.sqrt(2 * math.pi * v)
        return self.weights @ comp

    def cdf(self, pixel: int, abscissae) -> np.ndarray:
        x = np.asarray(abscissae, dtype=float)
        m = self.means[:, pixel][:, None]
        s = np.sqrt(self.variances[:, pixel])[:, None]
        return self.weights @ ndtr((x[None, :] - m) / s)


def integrate_marginals(points: Sequence[HyperPoint]) -> PosteriorMarginals:
    """Mix the per-point Gaussian marginals with normalized weights."""
    w = normalized_weights(points)
    means = np.stack([np.asarray(p.mode, dtype=float) for p in points])
    variances = np.stack([np.asarray(p.cond_variances, dtype=float) for p in points])
    eap = w @ means
    spread = means - eap
    variance = w @ variances + w @ (spread * spread)
    return PosteriorMarginals(w, means, variances, eap, variance, tuple(points))


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


@dataclass
class InlaConfig:
    strategy: str = "ccd"
    delta_z: float = 1.0
    delta_pi: float = 2.5
    f0: float = math.sqrt(2.0)
    theta_init: tuple = (1.0, 1.0)
    fd_step: float = 1e-4
    hess_step: float = 1e-3
    mode_gtol: float = 1e-5
    max_mode_iter: int = 200
    workers: int = 1
    ordering: str = "natural"
    prior: Any = "flat"
    fixed_theta: tuple | None = None

    def validate(self):
        if self.strategy not in STRATEGIES:
            raise InvalidConfig(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.strategy == "fixed" and self.fixed_theta is None:
            raise InvalidConfig("strategy 'fixed' needs fixed_theta")
        if self.workers < 1:
            raise InvalidConfig("workers must be >= 1")
        make_prior(self.prior)
        return self

    def to_dict(self) -> dict:
        prior = make_prior(self.prior).to_dict()
        return {
            "strategy": self.strategy,
            "delta_z": self.delta_z,
            "delta_pi": self.delta_pi,
            "f0": self.f0,
            "theta_init": list(self.theta_init),
            "fd_step": self.fd_step,
            "hess_step": self.hess_step,
            "mode_gtol": self.mode_gtol,
            "max_mode_iter": self.max_mode_iter,
            "workers": self.workers,
            "ordering": self.ordering,
            "prior": prior,
            "fixed_theta": None if self.fixed_theta is None else list(self.fixed_theta),
        }


@dataclass(frozen=True, eq=False)
class InlaResult:
    strategy: str
    mode: HyperMode | None
    points: list
    marginals: PosteriorMarginals
    timings: dict
    n_evaluations: int

    @property
    def theta_mode(self) -> np.ndarray:
        if self.mode is not None:
            return self.mode.theta_star
        return self.points[0].theta


def run_inla(g: GridGraph, y, config: InlaConfig | None = None, on_phase: Callable[[str], None] | None = None) -> InlaResult:
    """Full pipeline: mode search, point placement, mixture marginals."""
    cfg = (config or InlaConfig()).validate()
    post = HyperPosterior(g, y, cfg.prior, ordering=cfg.ordering)
    timings = {}
    t0 = time.perf_counter()

    if cfg.strategy == "fixed":
        eta = np.log(np.asarray(cfg.fixed_theta, dtype=float))
        IcarHyper(*np.exp(eta))
        lp, ga = post.evaluate(eta)
        points = [HyperPoint(np.exp(eta), eta, np.zeros(eta.size), lp, 1.0, ga)]
        timings["mode"] = time.perf_counter() - t0
        mode = None
    else:
        if on_phase:
            on_phase("mode")
        mode = find_mode(
            post,
            cfg.theta_init,
            fd_step=cfg.fd_step,
            hess_step=cfg.hess_step,
            gtol=cfg.mode_gtol,
            max_iter=cfg.max_mode_iter,
        )
        timings["mode"] = time.perf_counter() - t0
        log.info("hyperparameter mode sigma2=%.6g d=%.6g", *mode.theta_star)
        if on_phase:
            on_phase("explore")
        t1 = time.perf_counter()
        if cfg.strategy == "ccd":
            points = explore_ccd(mode, post, cfg.f0, workers=cfg.workers)
        elif cfg.strategy == "grid":
            points = explore_grid(mode, post, cfg.delta_z, cfg.delta_pi, workers=cfg.workers)
        else:
            k = mode.eta_star.size
            points = [HyperPoint(mode.theta_star, mode.eta_star, np.zeros(k), mode.log_post, 1.0, mode.approx)]
        timings["explore"] = time.perf_counter() - t1
    t2 = time.perf_counter()
    marginals = integrate_marginals(points)
    timings["integrate"] = time.perf_counter() - t2
    timings["total"] = time.perf_counter() - t0
    return InlaResult(cfg.strategy, mode, points, marginals, timings, post.n_evaluations)
