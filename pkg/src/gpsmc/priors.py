"""Coordinatewise hyperparameter priors.

Every entry is a density over the stored coordinate itself: for a log-stored
quantity that is the density of its logarithm, for a natural-space mean
parameter it is the density of the value.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GaussianOnLog:
    mean: float
    std: float
    space = "log"

    def __post_init__(self):
        if not self.std > 0:
            raise ConfigError("std must be positive")

    def logpdf(self, x):
        z = (x - self.mean) / self.std
        return -0.5 * z * z - np.log(self.std) - _HALF_LOG_2PI

    def sample(self, n, rng):
        return self.mean + self.std * rng.standard_normal(n)


@dataclass(frozen=True)
class GaussianOnNatural(GaussianOnLog):
    space = "natural"


@dataclass(frozen=True)
class UniformOnLog:
    lo: float
    hi: float
    space = "log"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ConfigError("uniform prior needs lo < hi")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        return np.where(inside, -np.log(self.hi - self.lo), -np.inf)

    def sample(self, n, rng):
        return rng.uniform(self.lo, self.hi, n)


@dataclass(frozen=True)
class Fixed:
    """Point mass; the coordinate is held constant and never proposed."""

    value: float
    space = "any"

    def logpdf(self, x):
        return np.where(np.asarray(x) == self.value, 0.0, -np.inf)

    def sample(self, n, rng):
        return np.full(n, float(self.value))


class PriorSpec:
    """Independent prior, one entry per hyperparameter coordinate."""

    def __init__(self, entries):
        self.entries = tuple(entries)
        if not self.entries:
            raise ConfigError("prior needs at least one coordinate")

    def __len__(self):
        return len(self.entries)

    def __repr__(self):
        return f"PriorSpec({list(self.entries)!r})"

    @property
    def free_mask(self):
        return np.array([not isinstance(e, Fixed) for e in self.entries])

    def check_model(self, model):
        """Dimension and space compatibility with a :class:`GpModel`."""
        if len(self) != model.n_params:
            raise ConfigError(f"prior has {len(self)} entries, model has {model.n_params} hyperparameters")
        for name, is_log, entry in zip(model.param_names(), model.log_mask, self.entries):
            if entry.space == "log" and not is_log:
                raise ConfigError(f"{name} is stored in natural space; {type(entry).__name__} does not apply")
            if entry.space == "natural" and is_log:
                raise ConfigError(f"{name} is stored as a logarithm; use a *OnLog prior")

    def log_prior_batch(self, thetas):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        if thetas.shape[1] != len(self):
            raise DimensionError(f"expected {len(self)} coordinates, got {thetas.shape[1]}")
        out = np.zeros(thetas.shape[0])
        for j, entry in enumerate(self.entries):
            out += entry.logpdf(thetas[:, j])
        return out

    def sample(self, n, rng):
        if n < 1:
            raise ValueError("n must be at least 1")
        return np.column_stack([e.sample(n, rng) for e in self.entries])


def log_prior(spec, theta):
    """Sum of coordinate log densities; -inf outside a uniform support."""
    return float(spec.log_prior_batch(theta)[0])


def sample_prior(spec, n, rng):
    """``n`` i.i.d. draws as an (n, D) array."""
    return spec.sample(n, rng)


def prior_from_config(entries):
    """Build a :class:`PriorSpec` from a list of JSON-style dicts.

    Gaussian entries accept ``std`` or ``var``; ``{"type": "gaussian_log",
    "mean": 3, "var": 3}`` is the N(3, 3) reading of a log-normal prior.
    """
    out = []
    for i, e in enumerate(entries):
        try:
            kind = e["type"]
            if kind in ("gaussian_log", "gaussian_natural"):
                if ("std" in e) == ("var" in e):
                    raise ConfigError(f"prior entry {i}: give exactly one of std/var")
                std = float(e["std"]) if "std" in e else float(np.sqrt(float(e["var"])))
                cls = GaussianOnLog if kind == "gaussian_log" else GaussianOnNatural
                out.append(cls(float(e["mean"]), std))
            elif kind == "uniform_log":
                out.append(UniformOnLog(float(e["lo"]), float(e["hi"])))
            elif kind == "fixed":
                out.append(Fixed(float(e["value"])))
            else:
                raise ConfigError(f"prior entry {i}: unknown type {kind!r}")
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"prior entry {i}: malformed ({exc})") from exc
    return PriorSpec(out)


def prior_to_config(spec):
    out = []
    for e in spec.entries:
        if isinstance(e, GaussianOnNatural):
            out.append({"type": "gaussian_natural", "mean": e.mean, "std": e.std})
        elif isinstance(e, GaussianOnLog):
            out.append({"type": "gaussian_log", "mean": e.mean, "std": e.std})
        elif isinstance(e, UniformOnLog):
            out.append({"type": "uniform_log", "lo": e.lo, "hi": e.hi})
        else:
            out.append({"type": "fixed", "value": e.value})
    return out


def sarcos_prior(n_lengthscales):
    """Log-normal priors of the robot-arm setup: N(3, 3) on log lengthscales and
    log signal variance, N(1, 1) on log noise variance (second argument a variance)."""
    ls = [GaussianOnLog(3.0, float(np.sqrt(3.0))) for _ in range(n_lengthscales)]
    return PriorSpec(ls + [GaussianOnLog(3.0, float(np.sqrt(3.0))), GaussianOnLog(1.0, 1.0)])
