"""Gaussian approximation of p(x | theta, y) at its mode.

The mode of ln p(x | theta) + ln p(y | x) is found by projected Newton with
backtracking. For the Poisson model the iterates are kept at or above a
positivity floor; pixels that end on the floor with an outward-pointing
gradient are reported as clamped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence
from .gmrf import LOG_2PI, GridGraph, IcarHyper, build_icar_precision, precision_matvec, prior_logpdf, quad_form
from .likelihood import PoissonLikelihood
from .sparse_la import CholFactor, SparseSymMatrix, factorize

EPS_X = 1e-8
GRAD_TOL = 1e-8
REL_TOL = 1e-12
MAX_ITER = 100
MAX_HALVINGS = 40


@dataclass(frozen=True, eq=False)
class GaussianApprox:
    mode: np.ndarray
    approx_precision: SparseSymMatrix
    factor: CholFactor
    cond_variances: np.ndarray
    log_density_at_mode: float
    clamped: np.ndarray
    iterations: int
    grad_norm: float
    objective_trace: tuple

    @property
    def n(self) -> int:
        return self.mode.size


def _as_likelihood(y):
    if hasattr(y, "grad_hess"):
        return y
    return PoissonLikelihood(y)


def _objective(g, h, lik, x) -> float:
    return -0.5 * quad_form(g, h, x) + lik.loglik(x)


def gaussian_approx(
    g: GridGraph,
    h: IcarHyper,
    y,
    x0=None,
    *,
    ordering: str = "natural",
    tol: float = GRAD_TOL,
    max_iter: int = MAX_ITER,
) -> GaussianApprox:
    """Laplace approximation of the latent field for fixed hyperparameters.

    Args:
        g: pixel lattice.
        h: ICAR hyperparameters.
        y: a count field, or a likelihood object exposing ``loglik``,
            ``grad_hess``, ``initial`` and ``positive``.
        x0: starting field; defaults to ``max(y, 0.5)`` for counts.

    Raises:
        NoConvergence: the iteration cap was hit.
    """
    lik = _as_likelihood(y)
    q = build_icar_precision(g, h)
    diag_pos = q.indptr[:-1]
    cols = np.repeat(np.arange(q.n), np.diff(q.indptr))
    offdiag = q.indices != cols

    x = lik.initial() if x0 is None else np.array(x0, dtype=float).ravel()
    if lik.positive:
        x = np.maximum(x, EPS_X)
    f = _objective(g, h, lik, x)
    trace = [f]
    converged = False
    grad_norm = math.inf

    for it in range(max_iter + 1):
        gl, hl = lik.grad_hess(x)
        grad = gl - precision_matvec(g, h, x)
        active = (x <= EPS_X) & (grad < 0) if lik.positive else np.zeros(x.size, dtype=bool)
        pgrad = np.where(active, 0.0, grad)
        grad_norm = float(np.max(np.abs(pgrad)))
        if grad_norm <= tol:
            converged = True
            break
        if it == max_iter:
            break

        data = q.data.copy()
        data[diag_pos] -= hl
        if active.any():
            touch = active[q.indices] | active[cols]
            data[touch & offdiag] = 0.0
            data[diag_pos[active]] = 1.0
        step = factorize(q.with_data(data), ordering).solve(pgrad)

        alpha = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            cand = x + alpha * step
            if lik.positive:
                cand = np.maximum(cand, EPS_X)
            fc = _objective(g, h, lik, cand)
            if fc >= f:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # No ascent left at working precision.
            converged = True
            break
        change = abs(fc - f)
        x, f = cand, fc
        trace.append(f)
        if change <= REL_TOL * max(abs(f), 1.0):
            gl, hl = lik.grad_hess(x)
            grad = gl - precision_matvec(g, h, x)
            active = (x <= EPS_X) & (grad < 0) if lik.positive else np.zeros(x.size, dtype=bool)
            grad_norm = float(np.max(np.abs(np.where(active, 0.0, grad))))
            converged = True
            break

    if not converged:
        raise NoConvergence(
            f"Newton iteration cap {max_iter} reached (gradient {grad_norm:.3e})",
            theta=(h.sigma2, h.d),
        )

    _, hl = lik.grad_hess(x)
    data = q.data.copy()
    data[diag_pos] -= hl
    prec = q.with_data(data)
    factor = factorize(prec, ordering)
    cond_var = factor.inverse_diagonal()
    log_dens = 0.5 * factor.log_det() - 0.5 * q.n * LOG_2PI
    if lik.positive:
        clamped = active.copy()
    else:
        clamped = np.zeros(x.size, dtype=bool)
    return GaussianApprox(
        mode=x,
        approx_precision=prec,
        factor=factor,
        cond_variances=cond_var,
        log_density_at_mode=float(log_dens),
        clamped=clamped,
        iterations=len(trace) - 1,
        grad_norm=grad_norm,
        objective_trace=tuple(trace),
    )


def conditional_log_marginal_correction(ga: GaussianApprox, g: GridGraph, h: IcarHyper, y) -> float:
    """ln p(x*|theta) + ln p(y|x*) - ln p~_G(x*|theta, y), hyperprior excluded."""
    lik = _as_likelihood(y)
    return prior_logpdf(ga.mode, g, h) + lik.loglik(ga.mode) - ga.log_density_at_mode
