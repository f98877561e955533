"""Marginalized predictive: a weighted mixture of per-sample GP predictives."""
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import DegeneracyError, DimensionError
from .gp import LOG_2PI


@dataclass
class PredictiveMixture:
    """``N`` Gaussian components over the same ``m`` query points."""

    means: np.ndarray
    variances: np.ndarray
    weights: np.ndarray
    covs: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.means = np.atleast_2d(self.means)
        self.variances = np.atleast_2d(self.variances)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if self.means.shape != self.variances.shape or self.means.shape[0] != self.weights.shape[0]:
            raise DimensionError("component arrays and weights disagree")

    @property
    def n_components(self):
        return self.weights.shape[0]

    def moments(self):
        return mixture_moments(self)

    def logpdf(self, ystar):
        return mixture_logpdf(self, ystar)


def mixture_predict(samples, model, Xstar, full_cov=False):
    """One GP predictive per weighted sample, weights copied through.

    ``samples`` is anything exposing ``thetas`` (N, D) and normalized ``weights``.
    """
    thetas = np.atleast_2d(samples.thetas)
    w = np.asarray(samples.weights, dtype=float)
    if thetas.shape[0] == 0 or not np.isfinite(w).all() or w.sum() <= 0:
        raise DegeneracyError("cannot predict from an empty or degenerate sample set")
    w = w / w.sum()
    if not full_cov:
        means, variances = model.predict_batch(thetas, Xstar)
        return PredictiveMixture(means, variances, w)
    preds = [model.predict(t, Xstar, full_cov=True) for t in thetas]
    return PredictiveMixture(
        np.array([p.mean for p in preds]),
        np.array([p.var for p in preds]),
        w,
        np.array([p.cov for p in preds]),
    )


def mixture_moments(mix):
    """Per-point mean and variance of the mixture (law of total variance)."""
    w = mix.weights[:, None]
    mean = np.sum(w * mix.means, axis=0)
    second = np.sum(w * (mix.variances + mix.means**2), axis=0)
    return mean, np.maximum(second - mean**2, 0.0)


def mixture_logpdf(mix, ystar):
    """log sum_i w_i N(y; mu_i, s_i^2) per query point, in log space."""
    ystar = np.asarray(ystar, dtype=float).reshape(-1)
    if ystar.shape[0] != mix.means.shape[1]:
        raise DimensionError(f"{ystar.shape[0]} values for {mix.means.shape[1]} query points")
    v = mix.variances
    comp = -0.5 * (LOG_2PI + np.log(v) + (ystar[None, :] - mix.means) ** 2 / v)
    with np.errstate(divide="ignore"):
        log_w = np.log(mix.weights)[:, None]
    return logsumexp(comp + log_w, axis=0)


def merge_mixtures(a, b, lam):
    """Blend two mixtures with overall weights ``lam`` and ``1 - lam``."""
    return PredictiveMixture(
        np.vstack([a.means, b.means]),
        np.vstack([a.variances, b.variances]),
        np.concatenate([lam * a.weights, (1 - lam) * b.weights]),
    )
