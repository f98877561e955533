"""Gaussian-process regression with squared-exponential kernels.

Hyperparameters are a flat float vector ``theta`` laid out as

    [kernel params | mean params | log noise variance]

where the kernel block is ``[log lengthscale(s)..., log signal variance]``.
Positive quantities are stored as logarithms; mean-function parameters
stay in natural space.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from . import _pykernels
from ._backend import kernels as _kern
from .errors import CholeskyError, DimensionError

LOG_2PI = np.log(2.0 * np.pi)

KERNEL_FAMILIES = ("se_iso", "se_ard")
MEAN_FAMILIES = ("zero", "constant", "linear")


@dataclass(frozen=True)
class KernelSpec:
    family: str
    input_dim: int

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise DimensionError(f"unknown kernel family {self.family!r}")
        if self.input_dim < 1:
            raise DimensionError("input_dim must be positive")

    @property
    def n_lengthscales(self):
        return self.input_dim if self.family == "se_ard" else 1

    @property
    def n_params(self):
        return self.n_lengthscales + 1

    def param_names(self):
        if self.family == "se_ard":
            names = [f"log_lengthscale_{k}" for k in range(self.input_dim)]
        else:
            names = ["log_lengthscale"]
        return names + ["log_signal_var"]


@dataclass(frozen=True)
class MeanSpec:
    family: str
    input_dim: int

    def __post_init__(self):
        if self.family not in MEAN_FAMILIES:
            raise DimensionError(f"unknown mean family {self.family!r}")

    @property
    def n_params(self):
        return {"zero": 0, "constant": 1, "linear": self.input_dim + 1}[self.family]

    def param_names(self):
        if self.family == "constant":
            return ["mean_const"]
        if self.family == "linear":
            return ["mean_bias"] + [f"mean_slope_{k}" for k in range(self.input_dim)]
        return []

    def evaluate(self, X, params):
        """Mean values for a stack of parameter rows: (N, q) -> (N, n)."""
        params = np.atleast_2d(params)
        N = params.shape[0]
        if self.family == "zero":
            return np.zeros((N, X.shape[0]))
        if self.family == "constant":
            return np.repeat(params[:, :1], X.shape[0], axis=1)
        return params[:, :1] + params[:, 1:] @ X.T

    def jacobian(self, X):
        """d mean / d params, shape (n, q)."""
        n = X.shape[0]
        if self.family == "zero":
            return np.zeros((n, 0))
        if self.family == "constant":
            return np.ones((n, 1))
        return np.hstack([np.ones((n, 1)), X])


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise DimensionError(f"X has shape {X.shape} but y has length {y.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DimensionError("dataset contains non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @classmethod
    def empty(cls, input_dim):
        return cls(np.zeros((0, input_dim)), np.zeros(0))

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def input_dim(self):
        return self.X.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx])

    def append(self, X, y):
        X = np.asarray(X, dtype=float).reshape(-1, self.input_dim)
        return Dataset(np.vstack([self.X, X]), np.concatenate([self.y, np.ravel(y)]))


@dataclass
class PredictiveGaussian:
    """Predictive for noisy outputs at ``m`` query points."""

    mean: np.ndarray
    var: np.ndarray
    cov: np.ndarray = field(default=None, repr=False)

    @property
    def std(self):
        return np.sqrt(self.var)

    def logpdf(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(self.var <= 0):
            raise ValueError("non-positive predictive variance")
        return -0.5 * (LOG_2PI + np.log(self.var) + (y - self.mean) ** 2 / self.var)


def kernel_matrix(spec, theta, A, B):
    """SE covariance between the rows of ``A`` and ``B``.

    ``theta`` may be a full model vector; only its leading kernel block is read.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != spec.input_dim or B.shape[1] != spec.input_dim:
        raise DimensionError(
            f"inputs have {A.shape[1]} and {B.shape[1]} columns, kernel expects {spec.input_dim}"
        )
    theta = np.asarray(theta, dtype=float)
    if theta.shape[0] < spec.n_params:
        raise DimensionError("theta too short for kernel")
    inv_ls = np.broadcast_to(np.exp(-theta[: spec.n_lengthscales]), (spec.input_dim,))
    sf2 = float(np.exp(theta[spec.n_lengthscales]))
    return _kern.se_kernel(A, B, np.ascontiguousarray(inv_ls), sf2)


def _max_jitter(sf2, sn2):
    return _pykernels.JITTER_LEVELS[-1] * (sf2 + sn2)


class GpModel:
    """Kernel and mean specification bound to a dataset."""

    def __init__(self, kernel, mean, data):
        if kernel.input_dim != mean.input_dim or kernel.input_dim != data.input_dim:
            raise DimensionError("kernel, mean and data disagree on input dimension")
        self.kernel = kernel
        self.mean = mean
        self.data = data

    def __repr__(self):
        return f"GpModel({self.kernel.family}, {self.mean.family}, n={self.data.n}, d={self.input_dim})"

    @property
    def input_dim(self):
        return self.kernel.input_dim

    @property
    def n_params(self):
        return self.kernel.n_params + self.mean.n_params + 1

    def param_names(self):
        return self.kernel.param_names() + self.mean.param_names() + ["log_noise_var"]

    @property
    def log_mask(self):
        """True where the coordinate stores the log of a positive quantity."""
        mask = np.ones(self.n_params, dtype=bool)
        k = self.kernel.n_params
        mask[k : k + self.mean.n_params] = False
        return mask

    def to_natural(self, thetas):
        thetas = np.asarray(thetas, dtype=float)
        return np.where(self.log_mask, np.exp(thetas), thetas)

    def with_data(self, data):
        return GpModel(self.kernel, self.mean, data)

    def subset(self, idx):
        return self.with_data(self.data.subset(idx))

    def check_theta(self, thetas):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        if thetas.shape[1] != self.n_params:
            raise DimensionError(f"expected {self.n_params} hyperparameters, got {thetas.shape[1]}")
        if not np.all(np.isfinite(thetas)):
            raise DimensionError("hyperparameters must be finite")
        return thetas

    def unpack(self, thetas):
        """Split a (N, D) stack into (inv_ls (N, d), sf2, mean params, sn2)."""
        thetas = self.check_theta(thetas)
        nl = self.kernel.n_lengthscales
        k = self.kernel.n_params
        inv_ls = np.exp(-thetas[:, :nl])
        if nl != self.input_dim:
            inv_ls = np.repeat(inv_ls, self.input_dim, axis=1)
        sf2 = np.exp(thetas[:, nl])
        mean_params = thetas[:, k : k + self.mean.n_params]
        sn2 = np.exp(thetas[:, -1])
        return np.ascontiguousarray(inv_ls), sf2, mean_params, sn2

    def residuals(self, thetas):
        _, _, mp, _ = self.unpack(thetas)
        return self.data.y[None, :] - self.mean.evaluate(self.data.X, mp)

    # -- likelihood ---------------------------------------------------------

    def log_marginal_likelihood_batch(self, thetas):
        """log p(y | X, theta) for each row; zeros when the dataset is empty."""
        inv_ls, sf2, mp, sn2 = self.unpack(thetas)
        if self.data.n == 0:
            return np.zeros(inv_ls.shape[0])
        R = self.data.y[None, :] - self.mean.evaluate(self.data.X, mp)
        values, status = _kern.se_loglik_batch(self.data.X, R, inv_ls, sf2, sn2)
        bad = np.flatnonzero(status < 0)
        if bad.size:
            i = int(bad[0])
            raise CholeskyError(
                "Cholesky factorization failed", jitter=_max_jitter(sf2[i], sn2[i]), particle=i
            )
        return values

    def log_marginal_likelihood(self, theta):
        if self.data.n == 0:
            raise DimensionError("log marginal likelihood needs at least one data point")
        return float(self.log_marginal_likelihood_batch(theta)[0])

    def _factor(self, theta):
        inv_ls, sf2, mp, sn2 = self.unpack(theta)
        K = _kern.se_kernel(self.data.X, self.data.X, inv_ls[0], sf2[0])
        K[np.diag_indices_from(K)] += sn2[0]
        L, level = _pykernels._factor_one(K)
        if L is None:
            raise CholeskyError("Cholesky factorization failed", jitter=_max_jitter(sf2[0], sn2[0]))
        r = self.data.y - self.mean.evaluate(self.data.X, mp)[0]
        return L, r, (inv_ls[0], sf2[0], mp[0], sn2[0])

    def log_marginal_likelihood_and_grad(self, theta):
        """Value and analytic gradient with respect to every theta coordinate."""
        if self.data.n == 0:
            raise DimensionError("log marginal likelihood needs at least one data point")
        theta = np.asarray(theta, dtype=float)
        L, r, (inv_ls, sf2, _, sn2) = self._factor(theta)
        X = self.data.X
        n = X.shape[0]
        alpha = cho_solve((L, True), r)
        value = -0.5 * r @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * LOG_2PI
        W = np.outer(alpha, alpha) - cho_solve((L, True), np.eye(n))
        Kf = _kern.se_kernel(X, X, inv_ls, sf2)
        D = (X.T[:, :, None] - X.T[:, None, :]) ** 2 * (inv_ls**2)[:, None, None]
        grad = np.empty(self.n_params)
        if self.kernel.family == "se_ard":
            for k in range(self.input_dim):
                grad[k] = 0.5 * np.sum(W * Kf * D[k])
        else:
            grad[0] = 0.5 * np.sum(W * Kf * D.sum(axis=0))
        nl = self.kernel.n_lengthscales
        grad[nl] = 0.5 * np.sum(W * Kf)
        k0 = self.kernel.n_params
        grad[k0 : k0 + self.mean.n_params] = self.mean.jacobian(X).T @ alpha
        grad[-1] = 0.5 * sn2 * np.trace(W)
        return float(value), grad

    def log_conditional_likelihood(self, theta, given_idx, new_idx):
        """log p(y_new | y_given, theta): the per-batch likelihood increment."""
        given = self.subset(given_idx)
        new = self.data.subset(new_idx)
        if new.n == 0:
            return 0.0
        pred = given.predict(theta, new.X, full_cov=True)
        L, level = _pykernels._factor_one(pred.cov)
        if L is None:
            raise CholeskyError("conditional covariance not positive definite")
        z = solve_triangular(L, new.y - pred.mean, lower=True)
        return float(-0.5 * z @ z - np.log(np.diag(L)).sum() - 0.5 * new.n * LOG_2PI)

    # -- prediction ---------------------------------------------------------

    def predict(self, theta, Xstar, full_cov=False):
        """Noisy-output predictive p(y* | x*, y, X, theta)."""
        theta = np.asarray(theta, dtype=float)
        Xstar = np.atleast_2d(np.asarray(Xstar, dtype=float))
        if Xstar.shape[1] != self.input_dim:
            raise DimensionError(f"query points have {Xstar.shape[1]} columns, expected {self.input_dim}")
        inv_ls, sf2, mp, sn2 = (a[0] for a in self.unpack(theta))
        prior_mean = self.mean.evaluate(Xstar, mp)[0]
        Kss = _kern.se_kernel(Xstar, Xstar, inv_ls, sf2) if full_cov else None
        if self.data.n == 0:
            var = np.full(Xstar.shape[0], sf2 + sn2)
            cov = Kss + sn2 * np.eye(Xstar.shape[0]) if full_cov else None
            return PredictiveGaussian(prior_mean, var, cov)
        L, r, _ = self._factor(theta)
        Ks = _kern.se_kernel(self.data.X, Xstar, inv_ls, sf2)
        V = solve_triangular(L, Ks, lower=True)
        z = solve_triangular(L, r, lower=True)
        mean = prior_mean + V.T @ z
        var = sf2 + sn2 - np.einsum("ij,ij->j", V, V)
        cov = None
        if full_cov:
            cov = Kss - V.T @ V + sn2 * np.eye(Xstar.shape[0])
            cov = 0.5 * (cov + cov.T)
        return PredictiveGaussian(mean, var, cov)

    def predict_batch(self, thetas, Xstar):
        """Marginal predictive means and variances, shape (N, m) each."""
        Xstar = np.atleast_2d(np.asarray(Xstar, dtype=float))
        if Xstar.shape[1] != self.input_dim:
            raise DimensionError(f"query points have {Xstar.shape[1]} columns, expected {self.input_dim}")
        inv_ls, sf2, mp, sn2 = self.unpack(thetas)
        R = self.data.y[None, :] - self.mean.evaluate(self.data.X, mp)
        mean, var, status = _kern.se_predict_batch(self.data.X, R, Xstar, inv_ls, sf2, sn2)
        bad = np.flatnonzero(status < 0)
        if bad.size:
            i = int(bad[0])
            raise CholeskyError(
                "Cholesky factorization failed", jitter=_max_jitter(sf2[i], sn2[i]), particle=i
            )
        return mean + self.mean.evaluate(Xstar, mp), var

    def predict_sor(self, theta, inducing, Xstar):
        """Subset-of-regressors predictive with inducing inputs drawn from the data.

        Costs O(n m^2) instead of O(n^3).
        """
        inducing = np.asarray(inducing, dtype=np.int64).reshape(-1)
        n = self.data.n
        m = inducing.shape[0]
        if m == 0 or m > n:
            raise DimensionError(f"need 1 <= m <= n inducing points, got m={m}, n={n}")
        if np.unique(inducing).shape[0] != m or inducing.min() < 0 or inducing.max() >= n:
            raise DimensionError("inducing indices must be distinct and within range")
        Xstar = np.atleast_2d(np.asarray(Xstar, dtype=float))
        inv_ls, sf2, mp, sn2 = (a[0] for a in self.unpack(theta))
        Xu = self.data.X[inducing]
        Luu, _ = _pykernels._factor_one(_kern.se_kernel(Xu, Xu, inv_ls, sf2))
        if Luu is None:
            raise CholeskyError("inducing covariance not positive definite", jitter=_max_jitter(sf2, 0.0))
        V = solve_triangular(Luu, _kern.se_kernel(Xu, self.data.X, inv_ls, sf2), lower=True)
        Ws = solve_triangular(Luu, _kern.se_kernel(Xu, Xstar, inv_ls, sf2), lower=True)
        B = sn2 * np.eye(m) + V @ V.T
        Lb, _ = _pykernels._factor_one(B)
        if Lb is None:
            raise CholeskyError("SoR system not positive definite")
        r = self.data.y - self.mean.evaluate(self.data.X, mp)[0]
        a = solve_triangular(Lb, V @ r, lower=True)
        C = solve_triangular(Lb, Ws, lower=True)
        mean = self.mean.evaluate(Xstar, mp)[0] + C.T @ a
        var = sn2 * np.einsum("ij,ij->j", C, C) + sn2
        return PredictiveGaussian(mean, var)


def smse(pred_mean, y_true, y_train):
    """Mean squared error divided by the (population) variance of ``y_train``."""
    pred_mean = np.asarray(pred_mean, dtype=float)
    y_true = np.asarray(y_true, dtype=float)
    if pred_mean.shape != y_true.shape:
        raise DimensionError("prediction and target lengths differ")
    v = np.var(np.asarray(y_train, dtype=float))
    if not v > 0:
        raise ValueError("training targets have zero variance")
    return float(np.mean((pred_mean - y_true) ** 2) / v)


def msll(pred, y_true, y_train):
    """Mean standardized log loss.

    ``pred`` is anything with ``logpdf(y)`` returning per-point log densities
    (a :class:`PredictiveGaussian` or a predictive mixture).
    """
    y_true = np.asarray(y_true, dtype=float)
    y_train = np.asarray(y_train, dtype=float)
    log_p = np.asarray(pred.logpdf(y_true), dtype=float)
    if log_p.shape != y_true.shape:
        raise DimensionError("prediction and target lengths differ")
    mu0, v0 = y_train.mean(), y_train.var()
    log_p0 = -0.5 * (LOG_2PI + np.log(v0) + (y_true - mu0) ** 2 / v0)
    return float(np.mean(log_p0 - log_p))
