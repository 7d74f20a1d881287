"""Metropolis-adjusted Langevin baseline sampler.

The chain runs on u = ln x so the rates stay positive; the target density in
u includes the Jacobian term sum(u). A fixed diagonal mass matrix, set once
from the starting state, equalizes per-pixel curvature. The step size is
tuned by Robbins-Monro during burn-in and then frozen.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InvalidConfig
from .gmrf import GridGraph, IcarHyper
from .inla import FlatPrior, LogNormalPrior, make_prior
from .laplace import gaussian_approx
from .likelihood import GaussianLikelihood, PoissonLikelihood

SAMPLER_NAME = "MALA (log-rate, diagonal mass, Robbins-Monro warm-up)"
TARGET_ACCEPT = 0.574
THETA_TARGET_ACCEPT = 0.3


@dataclass
class ChainConfig:
    steps: int = 2000
    burn_in: int = 1000
    step_size: float = 0.1
    seed: int = 0
    theta_mode: str = "fixed"
    theta: tuple | None = None
    theta_every: int = 10
    theta_step: float = 0.3
    prior: object = "flat"
    adapt: bool = True
    init: str = "laplace"
    hist_bins: int = 50
    hist_range: tuple | None = None

    def validate(self) -> "ChainConfig":
        if self.steps < 1 or self.burn_in < 0 or self.burn_in >= self.steps:
            raise InvalidConfig(f"need 0 <= burn_in < steps, got burn_in={self.burn_in}, steps={self.steps}")
        if not self.step_size > 0:
            raise InvalidConfig("step_size must be > 0")
        if self.theta_mode not in ("fixed", "sample"):
            raise InvalidConfig(f"theta_mode must be 'fixed' or 'sample', got {self.theta_mode!r}")
        if self.theta is None:
            raise InvalidConfig("a starting/fixed theta is required")
        try:
            IcarHyper(*self.theta)
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(f"invalid theta {self.theta!r}: {exc}") from exc
        if self.theta_every < 1 or not self.theta_step > 0:
            raise InvalidConfig("theta_every must be >= 1 and theta_step > 0")
        if self.init not in ("laplace", "counts"):
            raise InvalidConfig(f"init must be 'laplace' or 'counts', got {self.init!r}")
        if self.hist_bins < 1:
            raise InvalidConfig("hist_bins must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise InvalidConfig("seed must fit in 64 bits")
        make_prior(self.prior)
        return self

    def to_dict(self) -> dict:
        out = asdict(self)
        out["theta"] = list(self.theta) if self.theta is not None else None
        out["hist_range"] = list(self.hist_range) if self.hist_range is not None else None
        out["prior"] = make_prior(self.prior).to_dict()
        return out


@dataclass(frozen=True, eq=False)
class ChainSummary:
    mean: np.ndarray
    variance: np.ndarray
    hist_edges: np.ndarray
    hist_counts: np.ndarray
    acceptance_rate: float
    n_retained: int
    step_size: float
    seed: int
    config: dict = field(default_factory=dict)
    theta_mean: tuple | None = None
    theta_acceptance: float | None = None
    sampler: str = SAMPLER_NAME

    @classmethod
    def from_samples(cls, samples, edges=None, **kw) -> "ChainSummary":
        """Summarize an explicit (draws x pixels) array."""
        s = np.atleast_2d(np.asarray(samples, dtype=float))
        if s.shape[0] == 1 and np.ndim(samples) == 1:
            s = s.T
        if edges is None:
            edges = np.linspace(s.min() - 0.5, s.max() + 0.5, 11)
        edges = np.asarray(edges, dtype=float)
        counts = np.stack([_histogram(s[:, i], edges) for i in range(s.shape[1])])
        kw.setdefault("acceptance_rate", 1.0)
        kw.setdefault("step_size", 0.0)
        kw.setdefault("seed", 0)
        return cls(s.mean(axis=0), s.var(axis=0), edges, counts, n_retained=s.shape[0], **kw)

    def histogram_csv(self, pixels=None, index_column: str = "pixel_index") -> str:
        """Rows of (pixel_index, bin_left, bin_right, count)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([index_column, "bin_left", "bin_right", "count"])
        pixels = range(self.hist_counts.shape[0]) if pixels is None else pixels
        for p in pixels:
            for b in range(self.hist_edges.size - 1):
                w.writerow([int(p), repr(float(self.hist_edges[b])), repr(float(self.hist_edges[b + 1])), int(self.hist_counts[p, b])])
        return buf.getvalue()


def _histogram(values, edges):
    idx = np.clip(np.searchsorted(edges, values, side="right") - 1, 0, edges.size - 2)
    return np.bincount(idx, minlength=edges.size - 1)


def _laplacian(g: GridGraph) -> sp.csr_matrix:
    a, b = g.edges
    off = sp.coo_matrix((np.ones(a.size), (a, b)), shape=(g.n, g.n))
    return (sp.diags(g.degree.astype(float)) - off - off.T).tocsr()


class _LatentTarget:
    """Log target in the sampler's coordinates u.

    For a positive likelihood u = ln x and the target picks up the Jacobian
    sum(u); otherwise u = x.
    """

    def __init__(self, g: GridGraph, lik):
        self.g = g
        self.lik = lik
        self.lap = _laplacian(g)
        self.log_scale = bool(lik.positive)
        if isinstance(lik, PoissonLikelihood):
            self._loglik = self._poisson
        elif isinstance(lik, GaussianLikelihood):
            self._loglik = self._gaussian
        else:
            self._loglik = self._generic

    def _poisson(self, x, u):
        return float(self.lik.y @ u) - float(x.sum()), self.lik.y / x - 1.0

    def _gaussian(self, x, u):
        # Constant terms are dropped; they cancel in every acceptance ratio.
        r = (self.lik.y - x) / self.lik.obs_var
        return -0.5 * float(r @ (self.lik.y - x)), r

    def _generic(self, x, u):
        gl, _ = self.lik.grad_hess(x)
        return self.lik.loglik(x), gl

    def to_x(self, u):
        return np.exp(u) if self.log_scale else u

    def to_u(self, x):
        return np.log(x) if self.log_scale else np.array(x, dtype=float)

    def __call__(self, u, h: IcarHyper):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            x = self.to_x(u)
            qx = (self.lap @ x + h.d * x) / h.sigma2
            ll, gl = self._loglik(x, u)
            value = -0.5 * float(x @ qx) + ll
            grad = gl - qx
            if self.log_scale:
                value += float(u.sum())
                grad = grad * x + 1.0
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            return -math.inf, grad
        return value, grad


class _ThetaConditional:
    """ln p(theta | x) up to a constant, for theta = exp(eta).

    With Q = (L + d I) / sigma2 only x^T L x and x^T x depend on x, so one
    lattice product per update serves both the current and proposed theta.
    """

    def __init__(self, g: GridGraph, prior):
        self.g = g
        self.prior = prior
        lam_r = 2.0 - 2.0 * np.cos(np.arange(g.rows) * math.pi / g.rows)
        lam_c = 2.0 - 2.0 * np.cos(np.arange(g.cols) * math.pi / g.cols)
        self.lam = (lam_r[:, None] + lam_c[None, :]).ravel()
        self.lap = _laplacian(g)

    def stats(self, x) -> tuple[float, float]:
        return float(x @ (self.lap @ x)), float(x @ x)

    def __call__(self, eta, stats) -> float:
        xlx, xx = stats
        sigma2, d = math.exp(eta[0]), math.exp(eta[1])
        logdet = float(np.sum(np.log(d + self.lam))) - self.g.n * eta[0]
        return 0.5 * logdet - 0.5 * (xlx + d * xx) / sigma2 + self.prior.logpdf(eta)


def run_chain(g: GridGraph, y, cfg: ChainConfig) -> ChainSummary:
    """Run one chain and summarize the retained draws.

    The latent update is MALA on u = ln x; with ``theta_mode='sample'`` a
    random-walk Metropolis step on (ln sigma2, ln d) follows every
    ``theta_every`` latent steps.
    """
    cfg.validate()
    lik = y if hasattr(y, "grad_hess") else PoissonLikelihood(y)
    if lik.n != g.n:
        raise InvalidConfig(f"data has {lik.n} pixels, grid has {g.n}")
    prior = make_prior(cfg.prior)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    eta = np.log(np.asarray(cfg.theta, dtype=float))
    h = IcarHyper.from_log(eta)
    target = _LatentTarget(g, lik)
    theta_cond = _ThetaConditional(g, prior)

    if cfg.init == "laplace":
        x0 = gaussian_approx(g, h, lik).mode
        if target.log_scale:
            x0 = np.maximum(x0, 0.5)
    else:
        x0 = lik.initial()
    u = target.to_u(x0)
    q_diag = (g.degree + h.d) / h.sigma2
    _, lik_curv = lik.grad_hess(x0)
    if target.log_scale:
        mass = x0 * x0 * (q_diag - lik_curv) + 1.0
    else:
        mass = q_diag - lik_curv
    inv_mass = 1.0 / mass
    inv_sqrt_mass = np.sqrt(inv_mass)

    if cfg.hist_range is not None:
        lo, hi = cfg.hist_range
    else:
        top = float(np.max(lik.y))
        spread = 10.0 * math.sqrt(abs(top) + 1.0) + 10.0
        lo = 0.0 if target.log_scale else float(np.min(lik.y)) - spread
        hi = top + spread
    edges = np.linspace(lo, hi, cfg.hist_bins + 1)
    counts = np.zeros((g.n, cfg.hist_bins), dtype=np.int64)
    rows = np.arange(g.n)

    log_eps = math.log(cfg.step_size)
    log_theta_step = math.log(cfg.theta_step)
    lp, grad = target(u, h)
    accepted = 0
    theta_tried = theta_accepted = 0
    total = np.zeros(g.n)
    total_sq = np.zeros(g.n)
    theta_sum = np.zeros(2)
    n_keep = 0

    for step in range(cfg.steps):
        eps = math.exp(log_eps)
        drift = 0.5 * eps * eps * inv_mass
        mean_fwd = u + drift * grad
        prop = mean_fwd + eps * inv_sqrt_mass * rng.standard_normal(g.n)
        lp_new, grad_new = target(prop, h)
        if math.isfinite(lp_new):
            mean_bwd = prop + drift * grad_new
            fwd = prop - mean_fwd
            bwd = u - mean_bwd
            log_q = (float(fwd @ (mass * fwd)) - float(bwd @ (mass * bwd))) / (2 * eps * eps)
            log_ratio = lp_new - lp + log_q
        else:
            log_ratio = -math.inf
        accept_prob = math.exp(min(0.0, log_ratio))
        if rng.random() < accept_prob:
            u, lp, grad = prop, lp_new, grad_new
            if step >= cfg.burn_in:
                accepted += 1
        if step < cfg.burn_in and cfg.adapt:
            log_eps += (step + 1) ** -0.6 * (accept_prob - TARGET_ACCEPT)

        if cfg.theta_mode == "sample" and (step + 1) % cfg.theta_every == 0:
            stats = theta_cond.stats(target.to_x(u))
            cur = theta_cond(eta, stats)
            cand = eta + math.exp(log_theta_step) * rng.standard_normal(2)
            new = theta_cond(cand, stats)
            a = math.exp(min(0.0, new - cur))
            if rng.random() < a:
                eta = cand
                h = IcarHyper.from_log(eta)
                lp, grad = target(u, h)
                if step >= cfg.burn_in:
                    theta_accepted += 1
            if step >= cfg.burn_in:
                theta_tried += 1
            elif cfg.adapt:
                log_theta_step += ((step + 1) // cfg.theta_every) ** -0.6 * (a - THETA_TARGET_ACCEPT)

        if step >= cfg.burn_in:
            x = target.to_x(u)
            total += x
            total_sq += x * x
            idx = np.minimum(np.maximum(np.searchsorted(edges, x, side="right") - 1, 0), cfg.hist_bins - 1)
            counts[rows, idx] += 1
            theta_sum += np.exp(eta)
            n_keep += 1

    mean = total / n_keep
    var = np.maximum(total_sq / n_keep - mean * mean, 0.0)
    theta_mean = None
    theta_acc = None
    if cfg.theta_mode == "sample":
        theta_mean = tuple(float(t) for t in theta_sum / n_keep)
        theta_acc = theta_accepted / theta_tried if theta_tried else 0.0
    return ChainSummary(
        mean=mean,
        variance=var,
        hist_edges=edges,
        hist_counts=counts,
        acceptance_rate=accepted / n_keep,
        n_retained=n_keep,
        step_size=math.exp(log_eps),
        seed=cfg.seed,
        config=cfg.to_dict(),
        theta_mean=theta_mean,
        theta_acceptance=theta_acc,
    )


def eap_from_chain(s: ChainSummary) -> np.ndarray:
    return s.mean.copy()


__all__ = [
    "ChainConfig",
    "ChainSummary",
    "FlatPrior",
    "LogNormalPrior",
    "SAMPLER_NAME",
    "eap_from_chain",
    "run_chain",
]
