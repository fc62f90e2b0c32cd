"""Statistical world: steering vectors, disturbance covariance, target amplitude."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import linalg
from .errors import ConfigError, FileFormatError, NotPositiveDefinite

#: clutter spectral spread giving a one-lag clutter correlation of 0.95
SIGMA_F_DEFAULT = math.sqrt(-math.log(0.95) / (2.0 * math.pi**2))

#: Doppler offset used to orient the mismatched steering when none is configured
DEFAULT_MISMATCH_OFFSET = 0.3


@dataclass(frozen=True)
class ClutterModel:
    """Disturbance model; ``kind`` is ``"gaussian"``, ``"white"`` or ``"custom"``."""

    kind: str = "gaussian"
    sigma_f: float = SIGMA_F_DEFAULT
    cnr_db: float = 10.0
    path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "white", "custom"):
            raise ConfigError(f"unknown clutter model {self.kind!r}")
        if self.kind == "gaussian" and not self.sigma_f > 0:
            raise ConfigError("sigma_f must be positive for gaussian clutter")
        if self.kind == "custom" and not self.path:
            raise ConfigError("custom clutter model needs a covariance file path")


@dataclass(frozen=True)
class ScenarioConfig:
    n: int = 16
    k: int = 32
    fd: float = 0.08
    delta_f: float = 0.3 / 16
    clutter: ClutterModel = field(default_factory=ClutterModel)
    snr_db: float = 15.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if self.k < self.n:
            raise ConfigError(f"k={self.k} < n={self.n}: scatter matrix would be singular")
        for f in (self.fd, self.fd + self.delta_f):
            if not -0.5 <= f < 0.5:
                raise ConfigError(f"normalized Doppler {f} outside [-0.5, 0.5)")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    @property
    def gamma(self) -> float:
        return db_to_linear(self.snr_db)


@dataclass(frozen=True, eq=False)
class ScenarioRealization:
    v: np.ndarray
    p: np.ndarray
    c: np.ndarray
    chol_c: np.ndarray
    gamma: float
    cos2theta: float
    alpha: complex

    @property
    def n(self) -> int:
        return self.v.shape[0]


def db_to_linear(db):
    """``10^(db/10)``; ``-inf`` dB maps to exactly 0."""
    out = np.power(10.0, np.asarray(db, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


def steering_vector(n: int, fd: float) -> np.ndarray:
    """Uniform-phase steering vector ``exp(i 2 pi m fd)``, ``m = 0..n-1``."""
    if n < 1:
        raise ConfigError("n must be positive")
    return np.exp(2j * np.pi * fd * np.arange(n))


def gaussian_clutter(n: int, sigma_f: float, cnr_db: float) -> np.ndarray:
    lag = np.subtract.outer(np.arange(n), np.arange(n))
    return db_to_linear(cnr_db) * np.exp(-2.0 * np.pi**2 * sigma_f**2 * lag**2)


def clutter_covariance(cfg: ScenarioConfig) -> np.ndarray:
    """Disturbance covariance ``R_c + I`` (unit thermal noise power)."""
    model = cfg.clutter
    if model.kind == "white":
        return np.eye(cfg.n, dtype=complex)
    if model.kind == "gaussian":
        c = gaussian_clutter(cfg.n, model.sigma_f, model.cnr_db) + np.eye(cfg.n)
        return c.astype(complex)
    from .fileio import read_matrix

    c = read_matrix(model.path)
    if c.shape != (cfg.n, cfg.n):
        raise FileFormatError(f"{model.path}: matrix is {c.shape[0]}x{c.shape[1]}, expected n={cfg.n}")
    try:
        linalg.cholesky(c)
    except NotPositiveDefinite:
        raise FileFormatError(f"{model.path}: covariance is not positive definite") from None
    return c


def mismatch_cosine(v, p, chol_c) -> float:
    """Squared cosine of the angle between ``v`` and ``p`` in the whitened space."""
    num = abs(linalg.quad_form(chol_c, p, v)) ** 2
    den = linalg.quad_form(chol_c, v) * linalg.quad_form(chol_c, p)
    return float(min(max(num / den, 0.0), 1.0))


def steering_with_cosine(v, direction, chol_c, cos2theta: float) -> np.ndarray:
    """True steering vector with prescribed whitened-space ``cos^2`` to ``v``.

    The orthogonal component is taken from ``direction`` (for instance a
    Doppler-shifted copy of ``v``) after whitening and projecting out ``v``.
    """
    if not 0.0 <= cos2theta <= 1.0:
        raise ConfigError("cos2theta must lie in [0, 1]")
    vw = linalg.solve_lower(chol_c, v)
    vw = vw / np.linalg.norm(vw)
    dw = linalg.solve_lower(chol_c, direction)
    dw = dw - vw * np.vdot(vw, dw)
    norm = np.linalg.norm(dw)
    if norm < 1e-12:
        raise ConfigError("mismatch direction is parallel to the nominal steering vector")
    dw = dw / norm
    pw = math.sqrt(cos2theta) * vw + math.sqrt(1.0 - cos2theta) * dw
    return chol_c @ pw


def realize(cfg: ScenarioConfig, cos2theta: Optional[float] = None, snr_db: Optional[float] = None,
            covariance=None) -> ScenarioRealization:
    """Build ``v``, ``p``, ``C`` and the target amplitude for ``cfg``.

    By default ``p`` is the Doppler-shifted steering at ``fd + delta_f``. When
    ``cos2theta`` is given, ``p`` is instead constructed to have exactly that
    mismatch, using the Doppler shift (or a default one when ``delta_f`` is 0)
    only to orient the orthogonal component.
    """
    c = clutter_covariance(cfg) if covariance is None else np.asarray(covariance, dtype=complex)
    chol_c = linalg.cholesky(c)
    v = steering_vector(cfg.n, cfg.fd)
    if cos2theta is None:
        p = steering_vector(cfg.n, cfg.fd + cfg.delta_f)
    else:
        offset = cfg.delta_f if cfg.delta_f != 0 else DEFAULT_MISMATCH_OFFSET / cfg.n
        direction = steering_vector(cfg.n, cfg.fd + offset)
        p = v.copy() if cos2theta == 1.0 else steering_with_cosine(v, direction, chol_c, cos2theta)
    gamma = cfg.gamma if snr_db is None else db_to_linear(snr_db)
    alpha = math.sqrt(gamma / linalg.quad_form(chol_c, p)) if gamma > 0 else 0.0
    cos2 = 1.0 if cos2theta == 1.0 or (cos2theta is None and cfg.delta_f == 0) else mismatch_cosine(v, p, chol_c)
    return ScenarioRealization(v=v, p=p, c=c, chol_c=chol_c, gamma=float(gamma),
                               cos2theta=cos2, alpha=complex(alpha))
