"""Data-tempered SMC sampler over GP hyperparameters.

The target sequence adds the data one batch at a time:

    pi_n(theta) ~ p(y[B_1..B_n] | X[B_1..B_n], theta) p(theta),   pi_0 = prior.

Each stage reweights by pi_n / pi_{n-1}, resamples (systematic) when the
effective sample size drops below ``ess_threshold * N`` and rejuvenates with
``K`` random-walk Metropolis-Hastings steps targeting pi_n. Per-particle log
prior and log likelihood are cached, so every MH step costs one new
likelihood evaluation per particle.
"""
import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from ._backend import kernels as _kern
from .errors import CholeskyError, DegeneracyError

SCALE_MIN = 1e-6
SCALE_MAX = 1e2


@dataclass(frozen=True)
class SmcConfig:
    n_particles: int = 100
    n_stages: int = 10
    n_moves: int = 5
    ess_threshold: float = 0.5
    adapt_target: float = 0.3
    scale_factor: float = 0.5
    shuffle: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_particles < 2:
            raise ValueError("n_particles must be >= 2")
        if self.n_stages < 1:
            raise ValueError("n_stages must be >= 1")
        if self.n_moves < 0:
            raise ValueError("n_moves must be >= 0")
        if not 0.0 <= self.ess_threshold <= 1.0:
            raise ValueError("ess_threshold must lie in [0, 1]")
        if not 0.0 < self.adapt_target < 1.0:
            raise ValueError("adapt_target must lie in (0, 1)")
        if not self.scale_factor > 0:
            raise ValueError("scale_factor must be positive")

    @property
    def eval_bound(self):
        """Uncached worst case 2NPK plus the NP reweighting evaluations."""
        N, P, K = self.n_particles, self.n_stages, self.n_moves
        return 2 * N * P * K + N * P


PRESETS = {
    "default": SmcConfig(n_particles=100, n_stages=10, n_moves=5),
    "sarcos": SmcConfig(n_particles=15, n_stages=20, n_moves=5),
    "changepoint": SmcConfig(n_particles=25, n_stages=1, n_moves=2),
}


def make_batches(n_data, n_batches, shuffle=False, rng=None):
    """Split ``range(n_data)`` into ``n_batches`` disjoint blocks of ceil(n/P).

    Trailing batches are empty when ``n_batches`` exceeds ``n_data``.
    """
    order = np.arange(n_data)
    if shuffle:
        order = (rng if rng is not None else np.random.default_rng()).permutation(n_data)
    size = -(-n_data // n_batches) if n_data else 0
    return [np.sort(order[i * size : (i + 1) * size]) for i in range(n_batches)]


class TemperingSequence:
    """The distributions pi_0..pi_P built from a model, a prior and data batches.

    Counts every likelihood evaluation in ``n_evals``.
    """

    def __init__(self, model, prior, batches):
        prior.check_model(model)
        self.model = model
        self.prior = prior
        self.batches = [np.asarray(b, dtype=np.int64) for b in batches]
        self._check_partition()
        self.n_evals = 0
        self._stage_models = {}

    def _check_partition(self):
        if not self.batches:
            return
        allidx = np.concatenate(self.batches)
        if np.unique(allidx).shape[0] != allidx.shape[0]:
            raise ValueError("batches overlap")
        if allidx.size and (allidx.min() < 0 or allidx.max() >= self.model.data.n):
            raise ValueError("batch index out of range")

    @classmethod
    def from_config(cls, model, prior, cfg, rng=None):
        batches = make_batches(model.data.n, cfg.n_stages, cfg.shuffle, rng)
        return cls(model, prior, batches)

    @property
    def n_stages(self):
        return len(self.batches)

    def stage_indices(self, n):
        if not 0 <= n <= self.n_stages:
            raise ValueError(f"stage {n} outside [0, {self.n_stages}]")
        if n == 0:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(self.batches[:n])

    def stage_model(self, n):
        if n not in self._stage_models:
            self._stage_models[n] = self.model.subset(self.stage_indices(n))
        return self._stage_models[n]

    def add_data(self, X, y):
        """Append observations to the pool; returns their indices (not yet a batch)."""
        start = self.model.data.n
        self.model = self.model.with_data(self.model.data.append(X, y))
        self._stage_models = {}
        return np.arange(start, self.model.data.n)

    def append_batch(self, idx):
        self.batches.append(np.asarray(idx, dtype=np.int64))
        try:
            self._check_partition()
        except ValueError:
            self.batches.pop()
            raise

    def log_likelihood(self, n, thetas, stage_label=None):
        """Likelihood of the first ``n`` batches for each row of ``thetas``."""
        thetas = np.atleast_2d(thetas)
        model = self.stage_model(n)
        if model.data.n == 0 or thetas.shape[0] == 0:
            return np.zeros(thetas.shape[0])
        self.n_evals += thetas.shape[0]
        try:
            return model.log_marginal_likelihood_batch(thetas)
        except CholeskyError as exc:
            raise CholeskyError(
                "Cholesky factorization failed", jitter=exc.jitter,
                stage=n if stage_label is None else stage_label, particle=exc.particle,
            ) from exc

    def log_pi(self, n, theta):
        """log pi_n(theta), unnormalized; -inf prior short-circuits the likelihood."""
        lp = float(self.prior.log_prior_batch(theta)[0])
        if n == 0 or not np.isfinite(lp):
            return lp
        return lp + float(self.log_likelihood(n, theta)[0])


@dataclass
class ParticleSystem:
    particles: np.ndarray
    log_weights: np.ndarray
    log_prior: np.ndarray
    log_lik: np.ndarray
    stage: int
    batches: list
    proposal_scale: np.ndarray
    scale_factor: float
    free_mask: np.ndarray
    eval_counter: int = 0
    acceptance: list = field(default_factory=list)
    resampled: list = field(default_factory=list)

    @property
    def n_particles(self):
        return self.particles.shape[0]

    @property
    def thetas(self):
        return self.particles

    @property
    def weights(self):
        return np.exp(self.log_weights)

    @property
    def log_target(self):
        return self.log_prior + self.log_lik

    def copy(self):
        return dataclasses.replace(
            self,
            particles=self.particles.copy(),
            log_weights=self.log_weights.copy(),
            log_prior=self.log_prior.copy(),
            log_lik=self.log_lik.copy(),
            batches=[b.copy() for b in self.batches],
            proposal_scale=self.proposal_scale.copy(),
            free_mask=self.free_mask.copy(),
            acceptance=list(self.acceptance),
            resampled=list(self.resampled),
        )

    def mean(self):
        return self.weights @ self.particles

    def std(self):
        w = self.weights
        mu = w @ self.particles
        return np.sqrt(np.maximum(w @ (self.particles - mu) ** 2, 0.0))


def _normalize(log_w):
    total = logsumexp(log_w)
    if not np.isfinite(total):
        raise DegeneracyError("total particle degeneracy: every weight is zero")
    return log_w - total


def initialize(cfg, seq, rng):
    """Stage 0: i.i.d. prior draws with uniform weights."""
    N = cfg.n_particles
    particles = seq.prior.sample(N, rng)
    free = seq.prior.free_mask
    ps = ParticleSystem(
        particles=particles,
        log_weights=np.full(N, -np.log(N)),
        log_prior=seq.prior.log_prior_batch(particles),
        log_lik=np.zeros(N),
        stage=0,
        batches=[],
        proposal_scale=np.zeros(particles.shape[1]),
        scale_factor=cfg.scale_factor,
        free_mask=free,
    )
    return rescale_proposal(ps)


def ess(ps):
    """Effective sample size 1 / sum(w^2) of the normalized weights."""
    w = ps.weights
    return float(1.0 / np.sum(w * w))


def reweight(ps, seq):
    """Advance the weights from pi_{n-1} to pi_n; particles are untouched."""
    n = ps.stage + 1
    if n > seq.n_stages:
        raise ValueError(f"particle system is at the last stage {ps.stage}")
    before = seq.n_evals
    new_lik = seq.log_likelihood(n, ps.particles)
    out = ps.copy()
    out.log_weights = _normalize(ps.log_weights + (new_lik - ps.log_lik))
    out.log_lik = new_lik
    out.stage = n
    out.batches.append(seq.batches[n - 1].copy())
    out.eval_counter += seq.n_evals - before
    return out


def resample(ps, rng):
    """Systematic resampling; weights reset to 1/N."""
    N = ps.n_particles
    idx = _kern.systematic_resample(np.ascontiguousarray(ps.weights), float(rng.random()))
    out = ps.copy()
    out.particles = ps.particles[idx]
    out.log_prior = ps.log_prior[idx]
    out.log_lik = ps.log_lik[idx]
    out.log_weights = np.full(N, -np.log(N))
    return out


def offspring_counts(ps, rng):
    idx = _kern.systematic_resample(np.ascontiguousarray(ps.weights), float(rng.random()))
    return np.bincount(idx, minlength=ps.n_particles)


def rescale_proposal(ps, factor=None):
    """Per-coordinate step = weighted particle std times the global factor."""
    out = ps.copy()
    f = out.scale_factor if factor is None else factor
    scale = np.clip(f * ps.std(), SCALE_MIN, SCALE_MAX)
    out.proposal_scale = np.where(ps.free_mask, scale, 0.0)
    return out


def adapt_proposal(ps, observed_acceptance, cfg, gamma=1.0):
    """Scale steps by exp(gamma * (observed - target)), clamped to [1e-6, 1e2]."""
    if not 0.0 <= observed_acceptance <= 1.0:
        raise ValueError("acceptance rate must lie in [0, 1]")
    g = np.exp(gamma * (observed_acceptance - cfg.adapt_target))
    out = ps.copy()
    out.proposal_scale = np.where(ps.free_mask, np.clip(ps.proposal_scale * g, SCALE_MIN, SCALE_MAX), 0.0)
    out.scale_factor = float(np.clip(ps.scale_factor * g, SCALE_MIN, SCALE_MAX))
    return out


def mh_move(ps, seq, rng, n_moves, cfg=None):
    """``n_moves`` random-walk MH steps per particle targeting pi_stage.

    The Gaussian walk is symmetric, so the acceptance ratio is
    pi(theta') / pi(theta). With ``cfg`` given, the step size adapts after
    every sweep. Appends the stage's mean acceptance rate.
    """
    n = ps.stage
    out = ps.copy()
    before = seq.n_evals
    free = out.free_mask
    rates = []
    for _ in range(n_moves):
        N, D = out.particles.shape
        noise = rng.standard_normal((N, D))
        log_u = np.log(rng.random(N))
        prop = out.particles + noise * out.proposal_scale
        prop[:, ~free] = out.particles[:, ~free]
        lp = seq.prior.log_prior_batch(prop)
        ll = np.full(N, -np.inf)
        ok = np.isfinite(lp)
        ll[ok] = seq.log_likelihood(n, prop[ok])
        log_alpha = (lp + ll) - out.log_target
        accept = ok & (log_u < log_alpha)
        out.particles[accept] = prop[accept]
        out.log_prior[accept] = lp[accept]
        out.log_lik[accept] = ll[accept]
        rate = float(accept.mean())
        rates.append(rate)
        if cfg is not None:
            out = adapt_proposal(out, rate, cfg)
    out.eval_counter += seq.n_evals - before
    out.acceptance.append(float(np.mean(rates)) if rates else float("nan"))
    return out


def _advance(ps, seq, cfg, rng):
    ps = reweight(ps, seq)
    do_resample = ess(ps) < cfg.ess_threshold * ps.n_particles
    if do_resample:
        ps = resample(ps, rng)
    ps.resampled.append(bool(do_resample))
    ps = rescale_proposal(ps)
    return mh_move(ps, seq, rng, cfg.n_moves, cfg)


def run(cfg, seq, rng=None):
    """Transport prior particles through every stage of ``seq``."""
    if seq.model.data.n == 0:
        raise ValueError("run needs a non-empty dataset")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    ps = initialize(cfg, seq, rng)
    for _ in range(seq.n_stages):
        ps = _advance(ps, seq, cfg, rng)
    return ps


def extend_online(ps, seq, new_batch, cfg, rng):
    """Append one batch to the sequence and perform that single transition."""
    if ps.stage != seq.n_stages:
        raise ValueError(f"extend_online needs the system at the last stage {seq.n_stages}, got {ps.stage}")
    seq.append_batch(new_batch)
    return _advance(ps, seq, cfg, rng)


def weighted_cdf(values, weights, grid):
    """Weighted empirical CDF of ``values`` evaluated at ``grid``."""
    order = np.argsort(values, kind="stable")
    v = np.asarray(values)[order]
    cw = np.cumsum(np.asarray(weights)[order])
    pos = np.searchsorted(v, grid, side="right")
    return np.where(pos > 0, cw[np.maximum(pos - 1, 0)], 0.0)
