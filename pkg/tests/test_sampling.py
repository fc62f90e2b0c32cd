import math

import numpy as np
import pytest
from scipy import stats

from cfarfp import features, linalg, montecarlo, scenario
from cfarfp.sampling import RngStream, Hypothesis, sample_batch, sample_complex_gaussian, sample_snapshot
from cfarfp.scenario import ClutterModel, ScenarioConfig


@pytest.mark.parametrize("scale", [1.0, 2.0])
def test_complex_gaussian_moments(scale):
    chol = linalg.cholesky(scale * np.eye(4))
    x = sample_complex_gaussian(chol, RngStream(7, 0), size=100_000)
    var = np.mean(np.abs(x) ** 2, axis=0)
    np.testing.assert_allclose(var, scale, rtol=0.02)
    se = math.sqrt(scale / 2 / len(x))
    assert np.all(np.abs(x.real.mean(axis=0)) < 3 * se)
    assert np.all(np.abs(x.imag.mean(axis=0)) < 3 * se)
    # circular symmetry: real and imaginary parts uncorrelated, equal power
    assert abs(np.mean(x.real * x.imag)) < 4 * scale / 2 / math.sqrt(len(x))
    np.testing.assert_allclose(np.mean(x.real**2, axis=0), scale / 2, rtol=0.02)


def test_complex_gaussian_single_draw_and_covariance():
    c = np.array([[2.0, 0.5j], [-0.5j, 1.0]])
    chol = linalg.cholesky(c)
    gen = np.random.default_rng(1)
    assert sample_complex_gaussian(chol, gen).shape == (2,)
    x = sample_complex_gaussian(chol, gen, size=200_000)
    emp = x.T @ x.conj() / len(x)
    np.testing.assert_allclose(emp, c, atol=0.02)


def test_stream_reproducible_and_distinct():
    a = RngStream(3, 5).generator().standard_normal(4)
    b = RngStream(3, 5).generator().standard_normal(4)
    c = RngStream(3, 6).generator().standard_normal(4)
    d = RngStream(4, 5).generator().standard_normal(4)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c) and not np.allclose(a, d)


def test_snapshot_reproducible(base_cfg, base_real):
    s1 = sample_snapshot(base_real, Hypothesis.H1, base_cfg, 42)
    s2 = sample_snapshot(base_real, Hypothesis.H1, base_cfg, 42)
    np.testing.assert_array_equal(s1.z, s2.z)
    np.testing.assert_array_equal(s1.scatter, s2.scatter)
    assert s1.trial_index == 42
    linalg.cholesky(s1.scatter)


def test_batch_equals_single_snapshots(base_cfg, base_real):
    z, s = sample_batch(base_real, Hypothesis.H0, base_cfg.k, base_cfg.seed, [3, 4, 5])
    snap = sample_snapshot(base_real, Hypothesis.H0, base_cfg, 4)
    np.testing.assert_array_equal(z[1], snap.z)
    np.testing.assert_array_equal(s[1], snap.scatter)


def test_h1_differs_from_h0_only_by_target(base_cfg, base_real):
    h0 = sample_snapshot(base_real, Hypothesis.H0, base_cfg, 9)
    h1 = sample_snapshot(base_real, Hypothesis.H1, base_cfg, 9)
    np.testing.assert_allclose(h1.z - h0.z, base_real.alpha * base_real.p, atol=1e-12)
    np.testing.assert_array_equal(h1.scatter, h0.scatter)


def test_h1_at_zero_snr_equals_h0(base_cfg):
    real = scenario.realize(base_cfg, snr_db=-math.inf)
    a = sample_snapshot(real, Hypothesis.H1, base_cfg, 1)
    b = sample_snapshot(real, Hypothesis.H0, base_cfg, 1)
    np.testing.assert_array_equal(a.z, b.z)


@pytest.mark.slow
def test_h0_beta_mean(base_cfg):
    cloud = montecarlo.h0_features(base_cfg, 100_000)
    sigma = math.sqrt(270) / (33 * math.sqrt(34))
    assert abs(np.mean(cloud.beta) - 18 / 33) < 3 * sigma / math.sqrt(len(cloud))


def test_cfar_smoke_two_covariances():
    base = ScenarioConfig(seed=11)
    white = ScenarioConfig(seed=11, clutter=ClutterModel(kind="white"))
    a = montecarlo.h0_features(base, 10_000, block=7)
    b = montecarlo.h0_features(white, 10_000, block=8)
    assert stats.ks_2samp(a.beta, b.beta).pvalue > 0.001
    assert stats.ks_2samp(a.t_tilde, b.t_tilde).pvalue > 0.001


def test_extraction_count_matches_trials(base_cfg):
    before = features.extraction_count()
    montecarlo.h0_features(base_cfg, 2500, block=9)
    assert features.extraction_count() - before == 2500
