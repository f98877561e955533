import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import mvn_logpdf_dense, se_kernel_loops
from gpsmc import _backend


def batch_problem(seed, N=6, n=7, d=2, m=4):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, (n, d))
    Xs = rng.uniform(-2, 2, (m, d))
    R = rng.standard_normal((N, n))
    inv_ls = np.exp(-rng.normal(0, 0.5, (N, d)))
    sf2 = np.exp(rng.normal(0, 0.5, N))
    sn2 = np.exp(rng.uniform(-4, -1, N))
    return X, Xs, R, inv_ls, sf2, sn2


def test_loglik_matches_dense_oracle(backend):
    X, _, R, inv_ls, sf2, sn2 = batch_problem(0)
    values, status = backend.se_loglik_batch(X, R, inv_ls, sf2, sn2)
    assert np.all(status == 0)
    for i in range(len(values)):
        cov = se_kernel_loops(X, X, 1 / inv_ls[i], sf2[i]) + sn2[i] * np.eye(len(X))
        assert values[i] == pytest.approx(mvn_logpdf_dense(R[i], np.zeros(len(X)), cov), abs=1e-10)


def test_predict_matches_dense_oracle(backend):
    X, Xs, R, inv_ls, sf2, sn2 = batch_problem(1)
    mean, var, status = backend.se_predict_batch(X, R, Xs, inv_ls, sf2, sn2)
    assert np.all(status == 0)
    for i in range(R.shape[0]):
        ls = 1 / inv_ls[i]
        Kinv = np.linalg.inv(se_kernel_loops(X, X, ls, sf2[i]) + sn2[i] * np.eye(len(X)))
        Ks = se_kernel_loops(X, Xs, ls, sf2[i])
        np.testing.assert_allclose(mean[i], Ks.T @ Kinv @ R[i], atol=1e-10)
        np.testing.assert_allclose(var[i], sf2[i] + sn2[i] - np.einsum("nm,nk,km->m", Ks, Kinv, Ks), atol=1e-10)


def test_empty_data(backend):
    _, Xs, _, inv_ls, sf2, sn2 = batch_problem(2)
    values, _ = backend.se_loglik_batch(np.zeros((0, 2)), np.zeros((6, 0)), inv_ls, sf2, sn2)
    np.testing.assert_array_equal(values, 0.0)
    mean, var, _ = backend.se_predict_batch(np.zeros((0, 2)), np.zeros((6, 0)), Xs, inv_ls, sf2, sn2)
    np.testing.assert_array_equal(mean, 0.0)
    np.testing.assert_allclose(var, (sf2 + sn2)[:, None] * np.ones((1, 4)))


def test_jitter_and_failure_status(backend):
    X = np.zeros((4, 1))
    R = np.ones((2, 4))
    inv_ls = np.ones((2, 1))
    values, status = backend.se_loglik_batch(X, R, inv_ls, np.ones(2), np.array([1e-300, -10.0]))
    assert status[0] > 0 and np.isfinite(values[0])
    assert status[1] == -1 and np.isnan(values[1])


def test_kernel_matches_loops(backend):
    rng = np.random.default_rng(3)
    A, B = rng.normal(size=(5, 3)), rng.normal(size=(6, 3))
    inv_ls = np.array([0.5, 2.0, 1.3])
    np.testing.assert_allclose(backend.se_kernel(A, B, inv_ls, 1.7), se_kernel_loops(A, B, 1 / inv_ls, 1.7), rtol=1e-13)


@pytest.mark.skipif(len(_backend.available_backends()) < 2, reason="compiled backend not built")
class TestAgreement:
    c = _backend.get_backend("compiled") if "compiled" in _backend.available_backends() else None
    p = _backend.get_backend("python")

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 9), st.integers(1, 4))
    def test_loglik_and_predict(self, seed, n, d):
        X, Xs, R, inv_ls, sf2, sn2 = batch_problem(seed, N=5, n=n, d=d)
        a, sa = self.c.se_loglik_batch(X, R, inv_ls, sf2, sn2)
        b, sb = self.p.se_loglik_batch(X, R, inv_ls, sf2, sn2)
        np.testing.assert_array_equal(sa, sb)
        np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-11)
        ma, va, _ = self.c.se_predict_batch(X, R, Xs, inv_ls, sf2, sn2)
        mb, vb, _ = self.p.se_predict_batch(X, R, Xs, inv_ls, sf2, sn2)
        np.testing.assert_allclose(ma, mb, atol=1e-10)
        np.testing.assert_allclose(va, vb, atol=1e-10)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=60).filter(lambda w: sum(w) > 1e-6),
           st.floats(0.0, 0.999999))
    def test_resample_identical(self, w, u):
        w = np.asarray(w) / np.sum(w)
        np.testing.assert_array_equal(self.c.systematic_resample(w, u), self.p.systematic_resample(w, u))


@pytest.mark.parametrize("name", _backend.available_backends())
def test_env_selects_backend(name):
    env = dict(os.environ, GPSMC_BACKEND=name)
    out = subprocess.run([sys.executable, "-c", "import gpsmc; print(gpsmc.backend.NAME)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == name
