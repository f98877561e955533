import itertools

import numpy as np
import pytest

from gpsmc.changepoint import (BocpdDetector, GaussianMeanSegment, HazardSpec, bocpd_step, gp_segment_factory,
                               run_length_map, segment_bounds, segment_predictive, threshold_segments)
from gpsmc.errors import DegeneracyError
from gpsmc.priors import Fixed, PriorSpec
from gpsmc.smc import PRESETS, SmcConfig

MU0, TAU2, SIGMA2 = 0.5, 2.0, 0.7


def conjugate_detector(rate, prune=0.0, cap=10**6, params=(MU0, TAU2, SIGMA2)):
    return BocpdDetector(lambda start: GaussianMeanSegment(*params), HazardSpec(rate), prune, cap)


# mean prior wide enough to cover both regimes of the step series
STEP_PARAMS = (2.5, 9.0, 1.0)


def segment_log_marginal(y):
    """Closed-form marginal of one segment: y ~ N(mu0 1, sigma2 I + tau2 11')."""
    n = len(y)
    cov = SIGMA2 * np.eye(n) + TAU2 * np.ones((n, n))
    r = y - MU0
    return -0.5 * (r @ np.linalg.solve(cov, r) + np.linalg.slogdet(cov)[1] + n * np.log(2 * np.pi))


def brute_force_run_lengths(y, rate):
    """p(r_t = r | y_1:t) for every t by enumerating all segmentations of y_1:t."""
    out = []
    for t in range(1, len(y) + 1):
        post = np.zeros(t)
        logs, runs = [], []
        for flags in itertools.product([0, 1], repeat=t - 1):
            starts = [0] + [k + 1 for k, f in enumerate(flags) if f]
            bounds = list(zip(starts, starts[1:] + [t]))
            lp = sum(flags) * np.log(rate) + (t - 1 - sum(flags)) * np.log1p(-rate)
            lp += sum(segment_log_marginal(y[a:b]) for a, b in bounds)
            logs.append(lp)
            runs.append(t - starts[-1])
        logs = np.array(logs)
        w = np.exp(logs - logs.max())
        for r, wi in zip(runs, w):
            post[r - 1] += wi
        out.append(post / post.sum())
    return out


def step_series(seed, n1=40, n2=40, shift=5.0):
    rng = np.random.default_rng(seed)
    return np.concatenate([rng.standard_normal(n1), shift + rng.standard_normal(n2)])


class TestMessagePassing:
    @pytest.mark.parametrize("T,rate,seed", [(6, 0.2, 0), (9, 0.05, 1), (10, 0.3, 2), (10, 0.5, 3)])
    def test_matches_exhaustive_oracle(self, T, rate, seed):
        rng = np.random.default_rng(seed)
        y = np.concatenate([rng.normal(0, 1, T // 2), rng.normal(3, 1, T - T // 2)])
        post = conjugate_detector(rate).run(np.arange(T), y)
        M, cp = run_length_map(post)
        oracle = brute_force_run_lengths(y, rate)
        for t in range(T):
            np.testing.assert_allclose(M[t, : t + 1], oracle[t], atol=1e-8)
            assert cp[t] == pytest.approx(oracle[t][0], abs=1e-8)

    def test_rows_normalized(self):
        y = step_series(0, 15, 15)
        M, _ = run_length_map(conjugate_detector(0.05, prune=1e-6).run(np.arange(30), y))
        np.testing.assert_allclose(M.sum(axis=1), 1.0, atol=1e-10)
        assert np.all(np.triu(M, 1) == 0.0)

    def test_no_change_limit(self):
        y = np.random.default_rng(4).standard_normal(25)
        M, _ = run_length_map(conjugate_detector(1e-12).run(np.arange(25), y))
        np.testing.assert_array_equal(M.argmax(axis=1), np.arange(25))

    def test_always_change_limit(self):
        y = np.random.default_rng(4).standard_normal(25)
        M, _ = run_length_map(conjugate_detector(1 - 1e-12).run(np.arange(25), y))
        np.testing.assert_array_equal(M.argmax(axis=1), 0)

    def test_constant_data_stays_on_diagonal(self):
        M, _ = run_length_map(conjugate_detector(1e-4).run(np.arange(20), np.full(20, MU0)))
        np.testing.assert_array_equal(M.argmax(axis=1), np.arange(20))

    def test_step_change_located(self):
        for seed in range(10):
            post = conjugate_detector(0.02, 1e-6, params=STEP_PARAMS).run(np.arange(80), step_series(seed))
            _, cp = run_length_map(post)
            assert abs(int(np.argmax(cp[1:])) + 2 - 41) <= 3

    def test_pruning_cap(self):
        det = conjugate_detector(1e-3, prune=0.0, cap=5)
        det.run(np.arange(30), np.zeros(30))
        assert len(det.run_lengths) == 5
        assert np.all(det.run_lengths <= 30)

    def test_underflow_diagnostic(self):
        class Impossible(GaussianMeanSegment):
            def log_predictive(self, x, y):
                return -np.inf

        det = BocpdDetector(lambda s: Impossible(), HazardSpec(0.1))
        with pytest.raises(DegeneracyError, match="underflow"):
            bocpd_step(det, 0.0, 1.0)

    def test_hazard_bounds(self):
        for bad in (0.0, 1.0, -0.1):
            with pytest.raises(ValueError):
                HazardSpec(bad)


class TestThreshold:
    def test_nothing_above(self):
        post = conjugate_detector(0.01).run(np.arange(10), np.zeros(10))
        assert threshold_segments(post, 0.5) == []
        assert threshold_segments(post, 1 - 1e-12) == []

    def test_single_change(self):
        post = conjugate_detector(0.02, 1e-6, params=STEP_PARAMS).run(np.arange(80), step_series(1))
        cps = threshold_segments(post, 0.5)
        assert cps == [41]
        assert segment_bounds(cps, 80) == [(0, cps[0] - 1), (cps[0] - 1, 80)]

    def test_threshold_range(self):
        post = conjugate_detector(0.01).run(np.arange(3), np.zeros(3))
        with pytest.raises(ValueError):
            threshold_segments(post, 1.0)


def fixed_factory(seed=0):
    prior = PriorSpec([Fixed(0.0), Fixed(np.log(2.0)), Fixed(0.3), Fixed(np.log(0.5))])
    return gp_segment_factory(SmcConfig(n_particles=2, n_stages=1, n_moves=2), seed, prior=prior)


class TestGpSegments:
    def test_empty_segment_is_prior_predictive(self):
        seg = gp_segment_factory(PRESETS["changepoint"], 0)(1)
        mix = segment_predictive(seg, [0.0])
        thetas = seg.ps.particles
        w = seg.ps.weights
        var = np.exp(thetas[:, 1]) + np.exp(thetas[:, 3])
        mean = w @ thetas[:, 2]
        m, v = mix.moments()
        assert m[0] == pytest.approx(mean, abs=1e-12)
        assert v[0] == pytest.approx(w @ (var + thetas[:, 2] ** 2) - mean**2, abs=1e-12)

    def test_one_point_hand_value(self):
        seg = fixed_factory()(1)
        seg.update([0.0], 1.3)
        x, sf2, sn2, c = 0.7, 2.0, 0.5, 0.3
        k = sf2 * np.exp(-0.5 * x**2)
        mean = c + k / (sf2 + sn2) * (1.3 - c)
        var = sf2 + sn2 - k**2 / (sf2 + sn2)
        m, v = segment_predictive(seg, [x]).moments()
        assert m[0] == pytest.approx(mean, abs=1e-12)
        assert v[0] == pytest.approx(var, abs=1e-12)

    def test_identical_data_identical_density(self):
        make = gp_segment_factory(PRESETS["changepoint"], 7)
        a, b = make(3), make(3)
        for t, y in enumerate([0.1, -0.4, 0.8]):
            a.update([float(t)], y)
            b.update([float(t)], y)
        assert a.log_predictive([3.0], 0.2) == b.log_predictive([3.0], 0.2)
        assert a.log_predictive([3.0], 0.2) == a.log_predictive([3.0], 0.2)

    def test_stage_tracks_segment_length(self):
        det = BocpdDetector(gp_segment_factory(PRESETS["changepoint"], 0), HazardSpec(0.1), prune_threshold=0.0)
        y = step_series(0, 4, 4)
        det.run(np.arange(8.0), y)
        for r, seg in zip(det.run_lengths, det.segments):
            assert seg.n == r == seg.seq.model.data.n

    def test_segments_share_no_state(self):
        det = BocpdDetector(gp_segment_factory(PRESETS["changepoint"], 0), HazardSpec(0.1), prune_threshold=0.0)
        det.run(np.arange(6.0), step_series(1, 3, 3))
        ids = [id(s.ps.particles) for s in det.segments] + [id(s.seq) for s in det.segments]
        assert len(set(ids)) == len(ids)
        before = [s.ps.particles.copy() for s in det.segments]
        det.segments[0].ps.particles += 1.0
        for s, b in zip(det.segments[1:], before[1:]):
            np.testing.assert_array_equal(s.ps.particles, b)

    def test_online_equals_reprocessing(self):
        y = step_series(2, 5, 4)
        X = np.arange(9.0)
        make = lambda: BocpdDetector(gp_segment_factory(PRESETS["changepoint"], 11), HazardSpec(0.05))
        online = make().run(X, y)
        for t in range(1, 10):
            again = make().run(X[:t], y[:t])
            np.testing.assert_array_equal(again.probs[-1], online.probs[t - 1])
            np.testing.assert_array_equal(again.run_lengths[-1], online.run_lengths[t - 1])

    def test_gp_step_change(self):
        y = step_series(4)
        post = BocpdDetector(gp_segment_factory(PRESETS["changepoint"], 4), HazardSpec(0.02)).run(np.arange(80.0), y)
        assert threshold_segments(post, 0.5) == [41]


class TestLag:
    def test_reads_delayed_column(self):
        post = conjugate_detector(0.05).run(np.arange(10), step_series(2, 5, 5))
        M = post.matrix()
        for L in (0, 1, 3):
            cp = post.changepoint_probability(L)
            for t in range(10 - L):
                assert cp[t] == M[t + L, L]
            assert cp[-1] == M[-1, 0]

    def test_lag_confirms_ambiguous_first_point(self):
        post = conjugate_detector(0.02, 1e-6, params=STEP_PARAMS).run(np.arange(80), step_series(0))
        assert threshold_segments(post, 0.5) == []
        assert threshold_segments(post, 0.5, lag=3) == [41]

    def test_negative_lag(self):
        post = conjugate_detector(0.05).run(np.arange(3), np.zeros(3))
        with pytest.raises(ValueError):
            post.changepoint_probability(-1)
