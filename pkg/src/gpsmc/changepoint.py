"""Online Bayesian change-point detection with GP segment models.

The run length ``r_t`` counts the observations in the current segment,
including ``y_t``; ``r_t = 1`` means a change point at ``t``. With a constant
hazard ``h`` the messages are

    p(r_t = r + 1, y_1:t) = p(r_{t-1} = r, y_1:t-1) (1 - h) p(y_t | segment of length r)
    p(r_t = 1, y_1:t)     = sum_r p(r_{t-1} = r, y_1:t-1) h p(y_t | empty segment)

Every run-length hypothesis owns its own hyperparameter particle system, grown
by one SMC transition per observation.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import smc
from .errors import DegeneracyError
from .gp import Dataset, GpModel, KernelSpec, MeanSpec
from .prediction import mixture_predict
from .priors import GaussianOnLog, GaussianOnNatural, PriorSpec


@dataclass(frozen=True)
class HazardSpec:
    rate: float

    def __post_init__(self):
        if not 0.0 < self.rate < 1.0:
            raise ValueError("hazard rate must lie in (0, 1)")


class GaussianMeanSegment:
    """Conjugate segment model: y ~ N(mu, sigma2) with mu ~ N(mu0, tau2).

    Closed-form stand-in for the GP segment, used to check the message passing.
    """

    def __init__(self, mu0=0.0, tau2=1.0, sigma2=1.0):
        self.mu, self.tau2, self.sigma2 = float(mu0), float(tau2), float(sigma2)
        self.n = 0

    def log_predictive(self, x, y):
        v = self.tau2 + self.sigma2
        return float(-0.5 * (np.log(2 * np.pi * v) + (y - self.mu) ** 2 / v))

    def update(self, x, y):
        prec = 1.0 / self.tau2 + 1.0 / self.sigma2
        self.mu = (self.mu / self.tau2 + y / self.sigma2) / prec
        self.tau2 = 1.0 / prec
        self.n += 1


class GpSegment:
    """Hyperparameter particles conditioned on one segment's data.

    Randomness for the k-th update comes from the stream ``(seed, start, k)``,
    so a segment evolves identically regardless of which other hypotheses exist.
    """

    def __init__(self, kernel, mean, prior, cfg, seed, start):
        self.cfg = cfg
        self.seed = seed
        self.start = start
        model = GpModel(kernel, mean, Dataset.empty(kernel.input_dim))
        self.seq = smc.TemperingSequence(model, prior, [])
        self.ps = smc.initialize(cfg, self.seq, np.random.default_rng([seed, start, 0]))

    @property
    def n(self):
        return self.ps.stage

    def predictive(self, x):
        Xs = np.asarray(x, dtype=float).reshape(1, -1)
        return mixture_predict(self.ps, self.seq.stage_model(self.ps.stage), Xs)

    def log_predictive(self, x, y):
        return float(self.predictive(x).logpdf([y])[0])

    def update(self, x, y):
        idx = self.seq.add_data(np.reshape(x, (1, -1)), [y])
        rng = np.random.default_rng([self.seed, self.start, self.n + 1])
        self.ps = smc.extend_online(self.ps, self.seq, idx, self.cfg, rng)


def segment_predictive(segment, x):
    """Mixture predictive of the next observation given exactly the segment's data."""
    return segment.predictive(x)


def default_gp_prior():
    """Priors for a unit-scale series: SE-iso lengthscale, signal var, constant mean, noise var."""
    return PriorSpec([
        GaussianOnLog(2.0, 1.0),
        GaussianOnLog(-1.0, 1.0),
        GaussianOnNatural(0.0, 5.0),
        GaussianOnLog(0.0, 1.0),
    ])


def gp_segment_factory(cfg, seed, kernel=None, mean=None, prior=None):
    kernel = kernel or KernelSpec("se_iso", 1)
    mean = mean or MeanSpec("constant", 1)
    prior = prior or default_gp_prior()

    def make(start):
        return GpSegment(kernel, mean, prior, cfg, seed, start)

    return make


@dataclass
class RunLengthPosterior:
    """Per-step retained run lengths with normalized and joint log probabilities."""

    run_lengths: list = field(default_factory=list)
    probs: list = field(default_factory=list)
    log_joint: list = field(default_factory=list)

    @property
    def T(self):
        return len(self.probs)

    def changepoint_probability(self, lag=0):
        """p(r_t = 1 | y_1:t) per step, or with ``lag`` L > 0 the delayed
        p(r_{t+L} = L + 1 | y_1:t+L), truncated at the last step."""
        if lag < 0:
            raise ValueError("lag must be non-negative")
        out = np.zeros(self.T)
        for t in range(self.T):
            s = min(t + lag, self.T - 1)
            r, p = self.run_lengths[s], self.probs[s]
            hit = np.flatnonzero(r == s - t + 1)
            out[t] = p[hit[0]] if hit.size else 0.0
        return out

    def matrix(self):
        M = np.zeros((self.T, self.T))
        for t, (r, p) in enumerate(zip(self.run_lengths, self.probs)):
            M[t, r - 1] = p
        return M


class BocpdDetector:
    def __init__(self, segment_factory, hazard, prune_threshold=1e-6, max_run_lengths=500):
        self.factory = segment_factory
        self.hazard = hazard
        self.prune_threshold = prune_threshold
        self.max_run_lengths = max_run_lengths
        self.t = 0
        self.run_lengths = np.zeros(0, dtype=np.int64)
        self.log_joint = np.zeros(0)
        self.segments = []
        self.posterior = RunLengthPosterior()

    def step(self, x, y):
        self.t += 1
        fresh = self.factory(self.t)
        log_new = fresh.log_predictive(x, y)
        if self.t == 1:
            log_joint = np.array([log_new])
            run_lengths = np.array([1])
            segments = [fresh]
        else:
            h = self.hazard.rate
            growth = np.array([s.log_predictive(x, y) for s in self.segments])
            grow = self.log_joint + np.log1p(-h) + growth
            change = logsumexp(self.log_joint) + np.log(h) + log_new
            log_joint = np.concatenate([[change], grow])
            run_lengths = np.concatenate([[1], self.run_lengths + 1])
            segments = [fresh] + self.segments
        if not np.isfinite(logsumexp(log_joint)):
            raise DegeneracyError(f"all run-length messages underflowed at t={self.t} (y={y!r})")
        keep = self._prune(log_joint)
        self.log_joint = log_joint[keep]
        self.run_lengths = run_lengths[keep]
        self.segments = [segments[i] for i in keep]
        for s in self.segments:
            s.update(x, y)
        post = np.exp(self.log_joint - logsumexp(self.log_joint))
        self.posterior.run_lengths.append(self.run_lengths.copy())
        self.posterior.probs.append(post)
        self.posterior.log_joint.append(self.log_joint.copy())
        return post

    def _prune(self, log_joint):
        post = np.exp(log_joint - logsumexp(log_joint))
        keep = np.flatnonzero(post >= self.prune_threshold)
        if keep.size == 0:
            keep = np.array([int(np.argmax(post))])
        if keep.size > self.max_run_lengths:
            top = keep[np.argsort(-post[keep], kind="stable")[: self.max_run_lengths]]
            keep = np.sort(top)
        return keep

    def run(self, X, y):
        X = np.asarray(X, dtype=float).reshape(len(y), -1)
        for xt, yt in zip(X, y):
            self.step(xt, float(yt))
        return self.posterior


def bocpd_step(detector, x, y):
    """One message-passing update; returns the normalized run-length posterior."""
    return detector.step(x, y)


def run_length_map(posterior):
    """Dense (T, T) run-length posterior and the change-point probability trace."""
    return posterior.matrix(), posterior.changepoint_probability()


def threshold_segments(posterior, threshold, lag=0):
    """Steps t >= 2 (1-based) where p(r_t = 1 | y_1:t) exceeds ``threshold``.

    Step 1 always starts a segment and is not reported. ``lag`` > 0 thresholds
    the delayed probability instead, which lets a few more observations confirm
    an ambiguous first point of a new regime.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    cp = posterior.changepoint_probability(lag)
    return [int(t) + 1 for t in np.flatnonzero(cp > threshold) if t >= 1]


def segment_bounds(change_points, T):
    """(start, stop) 0-based half-open slices for the segments implied by ``change_points``."""
    starts = [0] + [c - 1 for c in change_points]
    stops = starts[1:] + [T]
    return list(zip(starts, stops))
