import io
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vadfuse.gmm import (
    ClassLikelihoods,
    GaussComponent,
    GmmConfig,
    GmmDetector,
    GmmState,
    SubbandModel,
    adapt,
    decide_from_llrs,
    gauss_pdf,
    gmm_decide_full,
    min_track,
    responsibility,
    subband_llr,
    subband_llrs,
    total_llr,
    update_min,
    update_min_all,
    update_noise,
    update_speech,
)

import gmm_oracle

RAW = GmmConfig(min_std=0.0, feature_scale=1.0)


def random_state(rng, cfg=RAW) -> GmmState:
    nm = rng.normal(0, 2, (6, 2))
    return GmmState(nm + rng.uniform(2, 6, (6, 1)), rng.uniform(0.5, 3, (6, 2)), nm,
                    rng.uniform(0.5, 3, (6, 2)), nm.mean(axis=1) + rng.normal(0, 0.5, 6), cfg)


def assert_same(a: GmmState, b: GmmState) -> None:
    for x, y in zip(a._arrays(), b._arrays()):
        np.testing.assert_allclose(x, y, atol=1e-12, rtol=0)


def band(mean_s=0.0, mean_n=0.0, var=1.0, x_min=0.0) -> SubbandModel:
    return SubbandModel((GaussComponent(mean_s, var), GaussComponent(mean_s, var)),
                        (GaussComponent(mean_n, var), GaussComponent(mean_n, var)), x_min)


class TestGaussPdf:
    @pytest.mark.parametrize("x,var,expected", [(0.0, 1.0, 0.39894), (1.0, 1.0, 0.24197), (0.0, 4.0, 0.19947)])
    def test_examples(self, x, var, expected):
        assert gauss_pdf(x, GaussComponent(0.0, var)) == pytest.approx(expected, abs=1e-5)


class TestLlr:
    def test_identical_models(self):
        assert subband_llr(1.3, band(2.0, 2.0)) == 0.0

    def test_far_noise(self):
        m = SubbandModel((GaussComponent(5.0, 1.0),) * 2, (GaussComponent(-5.0, 1.0), GaussComponent(15.0, 1.0)), 0.0)
        assert subband_llr(5.0, m) > 20

    @given(st.floats(-50, 50), st.floats(-10, 10), st.floats(-10, 10), st.floats(0.01, 10), st.floats(0.01, 10))
    def test_antisymmetry(self, f, a, b, va, vb):
        m = SubbandModel((GaussComponent(a, va), GaussComponent(a + 1, vb)),
                         (GaussComponent(b, vb), GaussComponent(b - 1, va)), 0.0)
        swapped = SubbandModel(m.noise, m.speech, 0.0)
        assert abs(subband_llr(f, m) + subband_llr(f, swapped)) < 1e-9

    def test_approx_mode(self, rng):
        s = random_state(rng, replace(RAW, llr_mode="approx"))
        s.speech_mean[:] = s.noise_mean
        s.speech_var[:] = s.noise_var
        np.testing.assert_allclose(subband_llrs(rng.normal(size=6), s), 1.0)

    def test_floor_keeps_finite(self):
        assert math.isfinite(subband_llr(1e6, band(0.0, 1.0, 1e-4)))

    def test_vector_matches_scalar(self, rng):
        s = random_state(rng)
        f = rng.normal(0, 3, 6)
        llrs = subband_llrs(f, s)
        for i in range(6):
            assert llrs[i] == pytest.approx(subband_llr(f[i], s.band(i)), abs=1e-12)

    def test_total(self):
        k = np.full(6, 1 / 6)
        assert decide_from_llrs(np.array([6.0, 0, 0, 0, 0, 0]), k, 10, 10)[1] == pytest.approx(1.0)
        assert decide_from_llrs(np.zeros(6), k, 1, 1)[1] == 0.0

    def test_total_linear_in_weights(self, rng):
        s = random_state(rng)
        f = rng.normal(size=6)
        assert total_llr(f, s, 2 * s.k) == pytest.approx(2 * total_llr(f, s), rel=1e-12)


class TestDecide:
    k = np.full(6, 1 / 6)

    def test_subband_branch(self):
        assert decide_from_llrs(np.array([4.0, 0, 0, 0, 0, 0]), self.k, 3.0, 1.5)[0] == 1

    def test_total_branch(self):
        llrs = np.full(6, 1.6)
        assert decide_from_llrs(llrs, self.k, 3.0, 1.5)[0] == 1

    def test_otherwise(self):
        assert decide_from_llrs(np.zeros(6), self.k, 1.0, 1.0)[0] == 0

    def test_likelihood_product(self, rng):
        s = random_state(rng)
        f = rng.normal(size=6)
        _, lik, _ = gmm_decide_full(f, s)
        prod0 = np.prod([0.5 * gauss_pdf(f[i], s.band(i).noise[0]) + 0.5 * gauss_pdf(f[i], s.band(i).noise[1])
                         for i in range(6)])
        assert lik.p_h0 == pytest.approx(prod0, rel=1e-9)

    def test_normalized_handles_underflow(self):
        lik = ClassLikelihoods(0.0, 0.0, -2000.0, -2001.0).normalized()
        assert lik.p_h0 == pytest.approx(1 / (1 + math.exp(-1)))

    def test_responsibility_zero(self):
        assert responsibility(ClassLikelihoods(0.0, 0.0)) == (0.5, 0.5)


class TestUpdates:
    def test_noise_frozen_when_flagged_and_at_minimum(self, rng):
        s = random_state(rng)
        s.noise_mean[:] = s.x_min[:, None]
        before = s.copy()
        update_noise(s, rng.normal(size=6), 1, ClassLikelihoods(0.3, 0.7))
        assert_same(s, before)

    def test_noise_mean_rises_toward_feature(self, rng):
        s = random_state(rng)
        s.noise_mean[:] = s.x_min[:, None]
        f = s.noise_mean[:, 0] + 1.0
        old = s.noise_mean.copy()
        update_noise(s, f, 0, ClassLikelihoods(0.5, 0.5))
        assert np.all(s.noise_mean > old)

    def test_noise_std_shrinks_at_mean(self):
        s = GmmState.from_bootstrap(np.zeros((1, 6)), RAW)
        s.noise_mean[:] = 0.0
        s.x_min[:] = 0.0
        update_noise(s, np.zeros(6), 0, ClassLikelihoods(1.0, 0.0))
        # sigma 1 -> 1 + 0.1 * (-1)
        np.testing.assert_allclose(s.noise_var, 0.81, atol=1e-15)

    def test_speech_gated(self, rng):
        s = random_state(rng)
        before = s.copy()
        update_speech(s, rng.normal(size=6), 0, ClassLikelihoods(0.5, 0.5))
        assert_same(s, before)

    def test_speech_rises(self, rng):
        s = random_state(rng)
        old = s.speech_mean.copy()
        update_speech(s, s.speech_mean[:, 1] + 5, 1, ClassLikelihoods(0.5, 0.5))
        assert np.all(s.speech_mean > old)

    def test_speech_zero_responsibility(self, rng):
        s = random_state(rng)
        before = s.copy()
        update_speech(s, rng.normal(size=6), 1, ClassLikelihoods(1.0, 0.0))
        assert_same(s, before)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=6, max_size=6), st.integers(0, 1), st.floats(0, 1))
    def test_variance_floor(self, f, flag, r):
        s = GmmState.from_bootstrap(np.zeros((1, 6)), RAW)
        for _ in range(20):
            adapt(s, np.array(f), flag, ClassLikelihoods(r, 1 - r))
        assert s.noise_var.min() >= 1e-4 and s.speech_var.min() >= 1e-4

    def test_min_std_floor(self, rng):
        s = GmmState.from_bootstrap(np.zeros((1, 6)))
        for _ in range(200):
            adapt(s, np.zeros(6), 0, ClassLikelihoods(1.0, 0.0))
        assert s.noise_var.min() >= 9.0 - 1e-12

    def test_bounded_step(self, rng):
        s = random_state(rng)
        f = rng.normal(0, 3, 6)
        c = s.cfg.coeffs
        before = s.copy()
        after = before.copy()
        adapt(after, f, 0, ClassLikelihoods(0.4, 0.6))
        x_min = after.x_min
        bound = c.K_dn * np.abs((f[:, None] - before.noise_mean) / before.noise_var) + \
            c.K_L * np.abs(x_min[:, None] - before.noise_mean)
        assert np.all(np.abs(after.noise_mean - before.noise_mean) <= bound + 1e-12)


class TestMinTrack:
    def test_rise(self):
        assert min_track(10, 15, 20) == pytest.approx(10.1)

    def test_fall(self):
        assert min_track(10, 1, 2) == pytest.approx(3.6)

    def test_equal(self):
        assert min_track(10, 10, 2) == 10

    def test_update_min_uses_noise_mean(self):
        m = SubbandModel(band().speech, (GaussComponent(18.0, 1.0), GaussComponent(22.0, 1.0)), 10.0)
        assert update_min(m, 15.0).x_min == pytest.approx(10.1)

    def test_feature_target_option(self):
        s = GmmState.from_bootstrap(np.zeros((1, 6)), replace(RAW, min_target="feature"))
        update_min_all(s, np.full(6, -5.0))
        np.testing.assert_allclose(s.x_min, 0.8 * -5.0)


class TestOracle:
    def test_agrees_over_random_frames(self):
        rng = np.random.default_rng(99)
        cfg = replace(RAW, T_tau=3.0, T_a=1.5)
        s = random_state(rng, cfg)
        ref = {"sm": s.speech_mean.tolist(), "sv": s.speech_var.tolist(), "nm": s.noise_mean.tolist(),
               "nv": s.noise_var.tolist(), "xmin": s.x_min.tolist()}
        prev = (0.5, 0.5)
        for _ in range(2000):
            f = rng.normal(0, 3, 6) + rng.integers(2) * 4
            flag, lik, _ = gmm_decide_full(f, s)
            oflag, l0, l1 = gmm_oracle.decide(ref, f.tolist(), 3.0, 1.5)
            assert flag == oflag
            adapt(s, f, flag, ClassLikelihoods(*prev))
            gmm_oracle.step(ref, f.tolist(), oflag, *prev)
            hi = max(l0, l1)
            a, b = math.exp(l0 - hi), math.exp(l1 - hi)
            prev = (a / (a + b), b / (a + b))
            np.testing.assert_allclose(s.noise_mean, ref["nm"], atol=1e-12, rtol=0)
        np.testing.assert_allclose(s.speech_var, ref["sv"], atol=1e-12, rtol=0)
        np.testing.assert_allclose(s.x_min, ref["xmin"], atol=1e-12, rtol=0)


class TestInitAndDetector:
    def test_bootstrap_values(self):
        rows = np.tile(np.arange(6.0), (20, 1))
        s = GmmState.from_bootstrap(rows, RAW)
        np.testing.assert_allclose(s.noise_mean[:, 0], np.arange(6.0) - 0.1)
        np.testing.assert_allclose(s.speech_mean[:, 1], np.arange(6.0) + 4.1)
        np.testing.assert_allclose(s.noise_var, 1.0)
        np.testing.assert_allclose(s.x_min, np.arange(6.0))

    def test_scaled_units(self):
        s = GmmState.from_bootstrap(np.zeros((1, 6)))
        c = 10 / math.log(10)
        assert s.speech_mean[0, 0] == pytest.approx((4.0 - 0.1) * c)
        assert s.noise_var[0, 0] == pytest.approx(c * c)

    def test_silent_bootstrap(self, rng):
        det = GmmDetector()
        out = [det.step(rng.normal(size=6)) for _ in range(20)]
        assert out == [(0, 0.0)] * 20 and det.ready

    # Long runs use the default std floor; without it the variances collapse
    # and the gradient steps diverge.
    def test_stationary_fit(self):
        rng = np.random.default_rng(3)
        mu, sd = 20.0, 2.0
        s = GmmState.from_bootstrap(np.full((1, 6), mu + 4.0))
        for _ in range(10_000):
            adapt(s, rng.normal(mu, sd, 6), 0, ClassLikelihoods(1.0, 0.0))
        assert np.all(np.abs(s.noise_mean - mu) < 0.5)

    def test_separation(self):
        rng = np.random.default_rng(4)
        s = GmmState.from_bootstrap(np.zeros((1, 6)))
        for n in range(5000):
            loud = n % 2
            adapt(s, rng.normal(30.0 * loud, 2.0, 6), loud, ClassLikelihoods(0.5, 0.5))
        assert np.all(s.speech_mean.min(axis=1) > s.noise_mean.max(axis=1))

    def test_dump_format(self, rng):
        buf = io.StringIO()
        random_state(rng).dump(buf)
        lines = buf.getvalue().splitlines()
        assert len(lines) == 6 and all(len(l.split()) == 11 for l in lines)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            GmmConfig(weights=(0.5, 0.5, 0, 0, 0, 0.1))
        with pytest.raises(ValueError):
            GmmConfig(T_tau=float("inf"))
        with pytest.raises(ValueError):
            GmmConfig(min_target="x")
