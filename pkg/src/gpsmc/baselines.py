"""Comparison methods: grid marginalization, prior importance sampling and
multi-start maximum-likelihood point estimates.

Grid and importance-sampling results are :class:`WeightedSamples`, which the
mixture predictor accepts exactly like a particle system.
"""
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .errors import CholeskyError, ConfigError, DegeneracyError

GRID_CAP = 10**7


@dataclass
class WeightedSamples:
    thetas: np.ndarray
    log_weights: np.ndarray
    method: str = ""
    eval_counter: int = 0

    @property
    def weights(self):
        return np.exp(self.log_weights)

    @property
    def n_particles(self):
        return self.thetas.shape[0]

    def mean(self):
        return self.weights @ self.thetas


@dataclass(frozen=True)
class GridSpec:
    """Axes over the free coordinates: ``(lo, hi, count)`` each, in stored space."""

    axes: tuple
    cap: int = GRID_CAP

    def __post_init__(self):
        for lo, hi, count in self.axes:
            if count < 2 or not lo < hi:
                raise ConfigError("each grid axis needs lo < hi and count >= 2")
        if self.size > self.cap:
            raise ConfigError(f"grid has {self.size} nodes, cap is {self.cap}")

    @property
    def size(self):
        return int(np.prod([a[2] for a in self.axes], dtype=np.int64))

    def coordinates(self):
        return [np.linspace(lo, hi, int(count)) for lo, hi, count in self.axes]

    def nodes(self):
        return np.array(list(itertools.product(*self.coordinates())))


def _embed(free_values, prior):
    """Full theta rows from free-coordinate rows, filling fixed coordinates."""
    free = prior.free_mask
    base = np.array([0.0 if f else e.value for f, e in zip(free, prior.entries)])
    out = np.repeat(base[None, :], free_values.shape[0], axis=0)
    out[:, free] = free_values
    return out


def grid_posterior(model, prior, grid, chunk=65536):
    """Posterior weights proportional to pi_P at every grid node."""
    prior.check_model(model)
    if len(grid.axes) != int(prior.free_mask.sum()):
        raise ConfigError(f"grid has {len(grid.axes)} axes for {int(prior.free_mask.sum())} free coordinates")
    thetas = _embed(grid.nodes(), prior)
    log_t = prior.log_prior_batch(thetas)
    evals = 0
    for s in range(0, thetas.shape[0], chunk):
        sl = slice(s, s + chunk)
        ok = np.isfinite(log_t[sl])
        if model.data.n and ok.any():
            idx = np.flatnonzero(ok) + s
            log_t[idx] += model.log_marginal_likelihood_batch(thetas[idx])
            evals += idx.size
    total = logsumexp(log_t)
    if not np.isfinite(total):
        raise DegeneracyError("grid posterior has zero mass")
    return WeightedSamples(thetas, log_t - total, "grid", evals)


def prior_importance_sampler(model, prior, n, rng):
    """Prior draws weighted by the full-data likelihood.

    Draws and arithmetic match an SMC run with one stage and no moves, given
    the same generator state.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    prior.check_model(model)
    thetas = prior.sample(n, rng)
    log_lik = np.zeros(n)
    if model.data.n:
        log_lik = model.log_marginal_likelihood_batch(thetas)
    log_w = np.full(n, -np.log(n)) + log_lik
    total = logsumexp(log_w)
    if not np.isfinite(total):
        raise DegeneracyError("total particle degeneracy: every weight is zero")
    return WeightedSamples(thetas, log_w - total, "prior_is", n if model.data.n else 0)


@dataclass
class PointEstimate:
    theta: np.ndarray
    log_likelihood: float
    n_restarts_used: int
    converged: bool
    trace: list = field(default_factory=list)

    @property
    def thetas(self):
        return self.theta[None, :]

    @property
    def weights(self):
        return np.ones(1)


def maximize(fun_and_grad, x0, max_iter=500, gtol=1e-8):
    """Quasi-Newton (BFGS, Wolfe line search) ascent on ``fun_and_grad``.

    Returns ``(x, value, converged, n_iter)``. Non-finite evaluations are
    treated as -inf so the line search backs away from them.
    """

    def neg(x):
        try:
            v, g = fun_and_grad(x)
        except (CholeskyError, FloatingPointError):
            return np.inf, np.zeros_like(x)
        if not np.isfinite(v) or not np.all(np.isfinite(g)):
            return np.inf, np.zeros_like(x)
        return -v, -np.asarray(g, dtype=float)

    res = minimize(neg, np.asarray(x0, dtype=float), jac=True, method="BFGS",
                   options={"maxiter": max_iter, "gtol": gtol})
    return res.x, -float(res.fun), bool(res.success), int(res.nit)


def optimize_point_estimate(model, n_restarts, rng, prior):
    """Best maximum-likelihood optimum over ``n_restarts`` prior-drawn starts.

    Only the prior's free coordinates are optimized.
    """
    if n_restarts < 1:
        raise ValueError("n_restarts must be at least 1")
    prior.check_model(model)
    free = prior.free_mask
    starts = prior.sample(n_restarts, rng)
    best = None
    trace = []
    for r, start in enumerate(starts):

        def fg(x, start=start):
            theta = start.copy()
            theta[free] = x
            v, g = model.log_marginal_likelihood_and_grad(theta)
            return v, g[free]

        try:
            v0 = fg(start[free])[0]
        except CholeskyError:
            v0 = -np.inf
        x, v, converged, nit = maximize(fg, start[free])
        theta = start.copy()
        theta[free] = x
        if not np.isfinite(v) or v < v0:
            theta, v, converged = start.copy(), v0, False
        trace.append({"restart": r, "start": start.tolist(), "theta": theta.tolist(),
                      "log_likelihood": v, "start_log_likelihood": v0,
                      "converged": converged, "iterations": nit})
        if best is None or v > best[1]:
            best = (theta, v, converged)
    theta, v, converged = best
    if np.isfinite(v):
        v = model.log_marginal_likelihood(theta)
    return PointEstimate(theta, float(v), n_restarts, converged, trace)
