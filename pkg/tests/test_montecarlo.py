import math

import numpy as np
import pytest

from cfarfp import features, montecarlo as mc, scenario
from cfarfp import detectors as det
from cfarfp.detectors import Kind
from cfarfp.errors import InsufficientTrials, InvalidParameter, ThresholdUnset
from cfarfp.scenario import ScenarioConfig
from oracles import ed_pd, kelly_pd, kelly_threshold

N, K = 16, 32


@pytest.fixture(scope="module")
def h0_cloud():
    return mc.h0_features(ScenarioConfig(seed=21), 100_000)


def test_threshold_convention():
    vals = np.arange(1, 1001, dtype=float)
    # ceil(1000 * 0.99) = 990 -> 990th smallest
    assert mc.threshold_from(vals[::-1], 0.01) == 990.0
    assert mc.threshold_from(vals, 0.5) == 500.0


def test_calibration_errors(h0_cloud):
    with pytest.raises(InsufficientTrials):
        mc.calibrate_on([det.make(Kind.KELLY)], h0_cloud, 1e-5)
    with pytest.raises(InvalidParameter):
        mc.calibrate_on([det.make(Kind.KELLY)], h0_cloud, 0.6)
    with pytest.warns(UserWarning):
        mc.calibrate(det.make(Kind.KELLY), ScenarioConfig(), 1e-2, 2000)


def test_kelly_median(h0_cloud):
    res = mc.calibrate_on([det.make(Kind.KELLY)], h0_cloud, 0.49999)
    # analytic median of t/(1+t) under H0
    assert res[0].detector.eta == pytest.approx(kelly_threshold(0.5, N, K), rel=0.02)


def test_kelly_threshold_matches_analytic_inverse(h0_cloud):
    res = mc.calibrate_on([det.make(Kind.KELLY)], h0_cloud, 1e-3)[0]
    eta = res.detector.eta
    # P_fa(eta) from the closed-form tail, within the order-statistic granularity
    t = eta / (1 - eta)
    pfa_at_eta = (1 + t) ** -(K - N + 1)
    assert abs(pfa_at_eta - 1e-3) < 3 * math.sqrt(1e-3 / 1e5)
    assert res.empirical_pfa <= 1e-3
    assert res.trials == 100_000 and res.pfa_target == 1e-3


def test_fresh_data_pfa(h0_cloud):
    res = mc.calibrate_on([det.make(Kind.KELLY), det.make(Kind.AMF)], h0_cloud, 1e-3, seed=21)
    checks = mc.verify_cfar([r.detector for r in res], ScenarioConfig(seed=21),
                            {"gaussian": scenario.clutter_covariance(ScenarioConfig())}, 1e-3, 100_000)
    assert all(c.passed for c in checks)


def test_shared_feature_economy(h0_cloud):
    specs = [det.make(Kind.KELLY), det.make(Kind.AMF), det.make(Kind.ACE), det.make(Kind.ED)]
    cfg = ScenarioConfig(seed=2)
    before = features.extraction_count()
    with pytest.warns(UserWarning):
        res = mc.calibrate_many(specs, cfg, 1e-2, 3000)
    assert features.extraction_count() - before == 3000
    before = features.extraction_count()
    mc.estimate_pd([r.detector for r in res], cfg, [0.0, 10.0], 1.0, 500)
    assert features.extraction_count() - before == 1000


def test_estimate_pd_requires_thresholds(h0_cloud):
    with pytest.raises(ThresholdUnset):
        mc.estimate_pd([det.make(Kind.KELLY)], ScenarioConfig(), [10.0], 1.0, 10)
    with pytest.raises(ThresholdUnset):
        mc.estimate_pd([det.make(Kind.MPI, 1.0, n=N, k=K)], ScenarioConfig(), [10.0], 1.0, 10)


def test_pd_at_zero_snr_is_pfa(h0_cloud):
    kelly = mc.calibrate_on([det.make(Kind.KELLY)], h0_cloud, 0.05)[0].detector
    curve = mc.estimate_pd([kelly], ScenarioConfig(seed=21), [-200.0], 1.0, 20_000)[0]
    assert abs(curve.pd[0] - 0.05) < 3 * math.sqrt(0.05 * 0.95 / 20_000) + 3 * math.sqrt(0.05 * 0.95 / 1e5)


def test_kelly_and_ed_pd_match_analytic(h0_cloud):
    specs = [r.detector for r in mc.calibrate_on([det.make(Kind.KELLY), det.make(Kind.ED)], h0_cloud, 1e-3)]
    grid = [8.0, 12.0, 16.0]
    curves = mc.estimate_pd(specs, ScenarioConfig(seed=21), grid, 1.0, 4000)
    # evaluate the oracle at the calibrated thresholds so calibration noise drops out
    for g, pk, pe in zip(grid, curves[0].pd, curves[1].pd):
        gamma = 10 ** (g / 10)
        ref_k = kelly_pd(gamma, 1e-3, N, K, eta=specs[0].eta)
        ref_e = ed_pd(gamma, 1e-3, N, K, eta=specs[1].eta)
        assert abs(pk - ref_k) < 4 * math.sqrt(max(ref_k * (1 - ref_k), 1e-3) / 4000)
        assert abs(pe - ref_e) < 4 * math.sqrt(max(ref_e * (1 - ref_e), 1e-3) / 4000)


def test_pd_curve_fields(h0_cloud):
    kelly = mc.calibrate_on([det.make(Kind.KELLY)], h0_cloud, 1e-3)[0].detector
    grid = np.arange(0.0, 21.0, 2.0)
    curve = mc.estimate_pd([kelly], ScenarioConfig(seed=21), grid, 1.0, 1000)[0]
    assert curve.trials_per_point == 1000 and curve.cos2theta == 1.0
    np.testing.assert_array_equal(curve.gamma_db, grid)
    assert np.all((curve.pd >= 0) & (curve.pd <= 1))
    np.testing.assert_allclose(curve.ci, 1.96 * np.sqrt(curve.pd * (1 - curve.pd) / 1000))
    # monotone up to CI noise
    assert np.all(np.diff(curve.pd) >= -2 * np.maximum(curve.ci[1:], curve.ci[:-1]))


def test_mpi_oracle_recalibrates(h0_cloud):
    mpi = det.make(Kind.MPI, 0.0, n=N, k=K)
    curve = mc.estimate_pd([mpi], ScenarioConfig(seed=21), [5.0, 10.0], 1.0, 200, h0=h0_cloud, pfa=1e-3)[0]
    assert len(set(curve.thresholds)) == 2


def test_workers_do_not_change_results():
    cfg = ScenarioConfig(seed=77)
    real = scenario.realize(cfg)
    from cfarfp.sampling import Hypothesis
    a = mc.simulate(real, Hypothesis.H1, K, 77, 5000, block=3, workers=1)
    b = mc.simulate(real, Hypothesis.H1, K, 77, 5000, block=3, workers=3)
    np.testing.assert_array_equal(a.beta, b.beta)
    np.testing.assert_array_equal(a.t_tilde, b.t_tilde)


def test_feature_cloud_conditions():
    cfg = ScenarioConfig(seed=13)
    assert len(mc.feature_cloud(cfg, "H0", 0)) == 0
    with pytest.raises(InvalidParameter):
        mc.feature_cloud(cfg, "H2", 10)
    h0 = mc.feature_cloud(cfg, "H0", 5000)
    n = len(h0)
    assert abs(np.mean(h0.beta) - 18 / 33) < 5 * 0.0854 / math.sqrt(n)
    assert abs(np.mean(h0.t_tilde) - 1 / 16) < 5 * 0.06654 / math.sqrt(n)
    from cfarfp import analytics
    matched = mc.feature_cloud(cfg, "H1-matched", 5000)
    cm = analytics.cluster_moments(N, K, 10 ** 1.5, 1.0)
    assert abs(np.mean(matched.t_tilde) - cm.mu_t) < 5 * cm.sigma_t / math.sqrt(5000)


def test_scaled_covariance_gives_identical_decisions():
    cfg = ScenarioConfig(seed=31)
    c = scenario.clutter_covariance(cfg)
    a = mc.h0_features(cfg, 5000, block=mc.FRESH_BLOCK, covariance=c)
    b = mc.h0_features(cfg, 5000, block=mc.FRESH_BLOCK, covariance=100 * c)
    np.testing.assert_allclose(a.beta, b.beta, rtol=1e-9)
    np.testing.assert_allclose(a.t_tilde, b.t_tilde, rtol=1e-9, atol=1e-15)
    kelly = det.make(Kind.KELLY).with_eta(0.2)
    np.testing.assert_array_equal(det.detect(kelly, a), det.detect(kelly, b))


def test_binomial_interval():
    lo, hi = mc.binomial_interval(1e-3, 100_000)
    half = 3 * math.sqrt(1e-3 * 0.999 / 1e5)
    assert (lo, hi) == pytest.approx((1e-3 - half, 1e-3 + half))


def test_cloud_moments_standard_errors():
    # Gaussian reference: SE of sigma is sigma/sqrt(2n); SE of rho is (1-rho^2)/sqrt(n)
    gen = np.random.default_rng(0)
    n = 200_000
    x = gen.standard_normal(n)
    y = 0.5 * x + math.sqrt(0.75) * gen.standard_normal(n)
    cloud = features.FeatureCloud(x, y, x, y)
    em = mc.cloud_moments(cloud)
    assert em.se_sigma_beta == pytest.approx(1 / math.sqrt(2 * n), rel=0.05)
    assert em.se_rho == pytest.approx(0.75 / math.sqrt(n), rel=0.05)
    assert em.rho == pytest.approx(0.5, abs=5 * em.se_rho)
