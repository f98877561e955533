"""Repeated-run comparison of marginalization methods.

Run ``r`` of block ``b`` seeds every method from ``SeedSequence([seed, b, r])``
(common random numbers), so methods are paired within a block. Dispersion is
the across-run standard deviation of the predictive mean, averaged over the
query points.
"""
import numpy as np

from . import baselines, smc
from .prediction import mixture_moments, mixture_predict

METHODS = ("smc", "prior_is", "grid", "point")


def matched_is_samples(cfg):
    """Prior-IS sample count spending the SMC run's cached evaluation budget N*P*(K+1)."""
    return cfg.n_particles * cfg.n_stages * (cfg.n_moves + 1)


def run_method(method, model, prior, cfg, rng, is_samples=None, grid=None, restarts=1):
    if method == "smc":
        seq = smc.TemperingSequence.from_config(model, prior, cfg, rng)
        return smc.run(cfg, seq, rng)
    if method == "prior_is":
        n = is_samples or matched_is_samples(cfg)
        return baselines.prior_importance_sampler(model, prior, n, rng)
    if method == "grid":
        if grid is None:
            raise ValueError("grid method needs a GridSpec")
        return baselines.grid_posterior(model, prior, grid)
    if method == "point":
        return baselines.optimize_point_estimate(model, restarts, rng, prior)
    raise ValueError(f"unknown method {method!r}")


def compare_methods(model, prior, Xstar, methods, cfg, runs=15, blocks=1, seed=0,
                    is_samples=None, grid=None, restarts=1):
    """Predictive-mean curves and per-block dispersion for every method."""
    out = {}
    for method in methods:
        curves = np.empty((blocks, runs, Xstar.shape[0]))
        stds = np.empty((blocks, runs, Xstar.shape[0]))
        evals = np.zeros((blocks, runs), dtype=np.int64)
        for b in range(blocks):
            for r in range(runs):
                rng = np.random.default_rng(np.random.SeedSequence([seed, b, r]))
                samples = run_method(method, model, prior, cfg, rng, is_samples, grid, restarts)
                mean, var = mixture_moments(mixture_predict(samples, model, Xstar))
                curves[b, r] = mean
                stds[b, r] = np.sqrt(var)
                evals[b, r] = getattr(samples, "eval_counter", 0)
        dispersion = curves.std(axis=1).mean(axis=1)
        out[method] = {"curves": curves, "stds": stds, "dispersion": dispersion, "evals": evals}
    return out
