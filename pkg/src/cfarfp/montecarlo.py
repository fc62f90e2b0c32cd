"""Monte Carlo protocol: threshold calibration, P_d curves, CFAR checks.

Trials are split into fixed-size chunks that may run in worker processes;
every trial owns a random stream keyed by its index, and results are
concatenated in ascending trial order, so outputs do not depend on the
worker count. Features are extracted once per trial and shared by all
detectors.
"""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import detectors as det
from . import features, scenario
from .errors import InsufficientTrials, InvalidParameter, ThresholdUnset
from .features import FeatureCloud
from .sampling import BLOCK, Hypothesis, sample_batch

log = logging.getLogger(__name__)

CHUNK = 2000

# stream-id blocks (multiples of 2**40) keeping experiment phases on disjoint noise
CALIB_BLOCK = 0
FRESH_BLOCK = 1
CLOUD_BLOCK = 2
PD_BLOCK = 1024

CI_Z = 1.96


def _chunk_features(args):
    real, hyp, k, seed, ids, chol_c = args
    z, scatter = sample_batch(real, hyp, k, seed, ids, chol_c=chol_c)
    return features.extract_batch(z, scatter, real.v)


def simulate(real, hyp: Hypothesis, k: int, seed: int, count: int, block: int = 0,
             workers: int = 1, chol_c=None) -> FeatureCloud:
    """Feature points of ``count`` independent trials (trial indices ``0..count-1``)."""
    if count <= 0:
        return FeatureCloud.empty()
    base = block * BLOCK
    jobs = [(real, hyp, k, seed, np.arange(lo, min(lo + CHUNK, count), dtype=np.uint64) + np.uint64(base), chol_c)
            for lo in range(0, count, CHUNK)]
    if workers <= 1 or len(jobs) == 1:
        parts = [_chunk_features(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk_features, jobs))
    return FeatureCloud.concat(parts)


def h0_features(cfg, trials: int, block: int = CALIB_BLOCK, workers: int = 1, covariance=None) -> FeatureCloud:
    real = scenario.realize(cfg, snr_db=-math.inf, covariance=covariance)
    return simulate(real, Hypothesis.H0, cfg.k, cfg.seed, trials, block=block, workers=workers)


def feature_cloud(cfg, condition: str, count: int, workers: int = 1, cos2theta: Optional[float] = None,
                  snr_db: Optional[float] = None, block: Optional[int] = None) -> FeatureCloud:
    """Feature points under ``"H0"``, ``"H1-matched"`` or ``"H1-mismatched"``.

    The mismatched steering comes from ``cfg.delta_f`` unless ``cos2theta``
    pins the mismatch exactly.
    """
    if condition == "H0":
        real, hyp, default_block = scenario.realize(cfg, snr_db=-math.inf), Hypothesis.H0, CLOUD_BLOCK
    elif condition == "H1-matched":
        real, hyp, default_block = scenario.realize(cfg, cos2theta=1.0, snr_db=snr_db), Hypothesis.H1, CLOUD_BLOCK + 1
    elif condition == "H1-mismatched":
        real, hyp, default_block = scenario.realize(cfg, cos2theta=cos2theta, snr_db=snr_db), Hypothesis.H1, CLOUD_BLOCK + 2
    else:
        raise InvalidParameter(f"unknown condition {condition!r}")
    return simulate(real, hyp, cfg.k, cfg.seed, count, block=default_block if block is None else block,
                    workers=workers)


def threshold_from(values, pfa: float) -> float:
    """Ceiling order statistic: 1-based index ``ceil(n (1 - pfa))`` of the ascending sort."""
    values = np.sort(np.asarray(values, dtype=float))
    idx = math.ceil(len(values) * (1.0 - pfa))
    return float(values[min(max(idx, 1), len(values)) - 1])


@dataclass(frozen=True)
class CalibrationResult:
    detector: det.DetectorSpec
    pfa_target: float
    trials: int
    empirical_pfa: float
    seed: int


def _check_calibration(pfa: float, trials: int):
    if not 0.0 < pfa < 0.5:
        raise InvalidParameter("pfa must lie in (0, 0.5)")
    if trials * pfa < 10:
        raise InsufficientTrials(f"{trials} trials give fewer than 10 expected false alarms at pfa={pfa:g}")
    if trials < 100.0 / pfa:
        warnings.warn(f"{trials} calibration trials is below the recommended 100/pfa = {100 / pfa:.0f}",
                      stacklevel=3)


def calibrate_on(specs: Sequence[det.DetectorSpec], cloud: FeatureCloud, pfa: float, seed: int = 0
                 ) -> List[CalibrationResult]:
    """Set every threshold from one shared H0 feature set."""
    _check_calibration(pfa, len(cloud))
    out = []
    for spec in specs:
        stat = det.statistic(spec, cloud)
        eta = threshold_from(stat, pfa)
        out.append(CalibrationResult(detector=spec.with_eta(eta), pfa_target=pfa, trials=len(cloud),
                                     empirical_pfa=float(np.mean(stat > eta)), seed=seed))
    return out


def calibrate_many(specs, cfg, pfa: float, trials: int, workers: int = 1, covariance=None):
    _check_calibration(pfa, trials)
    cloud = h0_features(cfg, trials, workers=workers, covariance=covariance)
    return calibrate_on(specs, cloud, pfa, seed=cfg.seed)


def calibrate(spec, cfg, pfa: float, trials: int, workers: int = 1, covariance=None) -> CalibrationResult:
    return calibrate_many([spec], cfg, pfa, trials, workers=workers, covariance=covariance)[0]


def ci_halfwidth(pd, trials: int):
    pd = np.asarray(pd, dtype=float)
    return CI_Z * np.sqrt(pd * (1.0 - pd) / trials)


@dataclass(frozen=True, eq=False)
class PdCurve:
    detector: det.DetectorSpec
    cos2theta: float
    points: list  # (gamma_db, pd, ci_halfwidth)
    trials_per_point: int
    thresholds: list = field(default_factory=list)

    @property
    def gamma_db(self):
        return np.array([p[0] for p in self.points])

    @property
    def pd(self):
        return np.array([p[1] for p in self.points])

    @property
    def ci(self):
        return np.array([p[2] for p in self.points])


def estimate_pd(specs: Sequence[det.DetectorSpec], cfg, gamma_db_grid, cos2theta: float, trials: int,
                workers: int = 1, h0: Optional[FeatureCloud] = None, pfa: Optional[float] = None
                ) -> List[PdCurve]:
    """Detection probability versus SNR for calibrated detectors.

    All detectors share each trial's feature point. MPI runs in oracle mode:
    its parameter is set to the true SNR of the grid point and its threshold
    recalibrated on ``h0`` at ``pfa``.
    """
    needs_oracle = any(s.kind is det.Kind.MPI for s in specs)
    if needs_oracle and (h0 is None or pfa is None):
        raise ThresholdUnset("MPI needs the H0 calibration features and pfa to recalibrate per SNR")
    for s in specs:
        if s.eta is None and s.kind is not det.Kind.MPI:
            raise ThresholdUnset(f"{s.name}: threshold not calibrated")
    rows: Dict[int, list] = {i: [] for i in range(len(specs))}
    etas: Dict[int, list] = {i: [] for i in range(len(specs))}
    for gi, gdb in enumerate(gamma_db_grid):
        real = scenario.realize(cfg, cos2theta=cos2theta, snr_db=gdb)
        cloud = simulate(real, Hypothesis.H1, cfg.k, cfg.seed, trials, block=PD_BLOCK + gi, workers=workers)
        for i, spec in enumerate(specs):
            if spec.kind is det.Kind.MPI:
                oracle = replace(spec, eps=real.gamma, eta=None)
                spec = oracle.with_eta(threshold_from(det.statistic(oracle, h0), pfa))
            pd = float(np.mean(det.detect(spec, cloud)))
            rows[i].append((float(gdb), pd, float(ci_halfwidth(pd, trials))))
            etas[i].append(spec.eta)
    return [PdCurve(detector=s, cos2theta=float(cos2theta), points=rows[i], trials_per_point=trials,
                    thresholds=etas[i]) for i, s in enumerate(specs)]


def binomial_interval(pfa: float, trials: int, z: float = 3.0):
    half = z * math.sqrt(pfa * (1.0 - pfa) / trials)
    return pfa - half, pfa + half


@dataclass(frozen=True)
class CfarCheck:
    detector: det.DetectorSpec
    covariance: str
    trials: int
    empirical_pfa: float
    low: float
    high: float

    @property
    def passed(self) -> bool:
        return self.low <= self.empirical_pfa <= self.high


def verify_cfar(specs, cfg, covariances: Dict[str, np.ndarray], pfa: float, trials: int,
                workers: int = 1) -> List[CfarCheck]:
    """Empirical P_fa of calibrated detectors on fresh H0 data under other covariances.

    Each covariance reuses the same per-trial streams, so scaled covariances
    see the same underlying white noise. Failure means falling outside the
    99.7% binomial interval around the target.
    """
    if isinstance(specs, det.DetectorSpec):
        specs = [specs]
    lo, hi = binomial_interval(pfa, trials)
    out = []
    for label, cov in covariances.items():
        cloud = h0_features(cfg, trials, block=FRESH_BLOCK, workers=workers, covariance=cov)
        for spec in specs:
            emp = float(np.mean(det.detect(spec, cloud)))
            out.append(CfarCheck(detector=spec, covariance=label, trials=trials, empirical_pfa=emp, low=lo, high=hi))
    return out


@dataclass(frozen=True)
class EmpiricalMoments:
    count: int
    mu_beta: float
    mu_t: float
    sigma_beta: float
    sigma_t: float
    rho: float
    se_sigma_beta: float
    se_sigma_t: float
    se_rho: float


def cloud_moments(cloud: FeatureCloud) -> EmpiricalMoments:
    """Sample moments with delta-method standard errors.

    Standard errors of the spreads and of the correlation use the sample
    fourth moments, so they hold for the skewed feature laws too.
    """
    n = len(cloud)
    b = np.asarray(cloud.beta)
    t = np.asarray(cloud.t_tilde)
    mb, mt = math.fsum(b) / n, math.fsum(t) / n
    db, dt = b - mb, t - mt
    vb, vt = np.mean(db**2), np.mean(dt**2)
    sb, st = math.sqrt(vb), math.sqrt(vt)
    rho = float(np.mean(db * dt) / (sb * st))
    x, y = db / sb, dt / st
    m22, m31, m13 = np.mean(x**2 * y**2), np.mean(x**3 * y), np.mean(x * y**3)
    m40, m04 = np.mean(x**4), np.mean(y**4)
    var_r = ((1 + rho**2 / 2) * m22 - rho * (m31 + m13) + rho**2 / 4 * (m40 + m04)) / n
    return EmpiricalMoments(count=n, mu_beta=mb, mu_t=mt, sigma_beta=sb, sigma_t=st, rho=rho,
                            se_sigma_beta=sb * math.sqrt(max(m40 - 1, 0.0) / n) / 2,
                            se_sigma_t=st * math.sqrt(max(m04 - 1, 0.0) / n) / 2,
                            se_rho=math.sqrt(max(var_r, 0.0)))
