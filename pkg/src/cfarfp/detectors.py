"""Detector catalog evaluated in the CFAR feature plane.

Every detector is a scalar statistic of ``(beta, t_tilde)`` compared with a
threshold ``eta`` (H1 iff statistic > eta). Where a raw-data definition
exists, :func:`raw_statistic` computes it straight from ``z``, ``S`` and
``v`` so the two routes can be checked against each other.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import gammaln, logsumexp

from . import analytics, linalg
from .errors import InvalidParameter, ThresholdUnset
from .sampling import Hypothesis


class Kind(enum.Enum):
    KELLY = "KELLY"
    AMF = "AMF"
    ACE = "ACE"
    ED = "ED"
    KALSON = "KALSON"
    ABORT = "ABORT"
    WABORT = "WABORT"
    KWA = "KWA"
    RAO = "RAO"
    CAD = "CAD"
    CARD = "CARD"
    ROB = "ROB"
    NAT = "NAT"
    MPI = "MPI"
    QUAD = "QUAD"
    GAUSS = "GAUSS"
    LIN = "LIN"


#: detectors whose boundary is only defined implicitly
IMPLICIT = frozenset({Kind.CAD, Kind.CARD, Kind.NAT, Kind.MPI})
#: detectors without a tunable parameter
UNTUNED = frozenset({Kind.KELLY, Kind.AMF, Kind.ACE, Kind.ED, Kind.ABORT, Kind.WABORT, Kind.RAO})
#: detectors with a raw-data statistic
RAW_FORMS = frozenset({Kind.KELLY, Kind.AMF, Kind.ACE, Kind.ED, Kind.KALSON, Kind.ABORT, Kind.WABORT,
                       Kind.RAO, Kind.ROB, Kind.CAD, Kind.CARD})
#: the classical detectors of the boundary table
TABLE_KINDS = (Kind.KELLY, Kind.AMF, Kind.ACE, Kind.ED, Kind.KALSON, Kind.ABORT, Kind.WABORT, Kind.KWA,
               Kind.RAO, Kind.CAD, Kind.CARD, Kind.ROB, Kind.NAT)
_NEEDS_DIMS = frozenset({Kind.ROB, Kind.NAT, Kind.MPI, Kind.GAUSS})


def _check_eps(kind: Kind, eps: float):
    if not math.isfinite(eps):
        raise InvalidParameter(f"{kind.value}: eps must be finite")
    if kind is Kind.KALSON and not 0.0 <= eps <= 1.0:
        raise InvalidParameter("KALSON: eps must lie in [0, 1]")
    if kind in (Kind.KWA, Kind.CAD, Kind.CARD, Kind.GAUSS) and not eps > 0:
        raise InvalidParameter(f"{kind.value}: eps must be positive")
    if kind in (Kind.ROB, Kind.NAT, Kind.MPI, Kind.QUAD) and eps < 0:
        raise InvalidParameter(f"{kind.value}: eps must be nonnegative")


@dataclass(frozen=True)
class DetectorSpec:
    kind: Kind
    eps: float = 0.0
    eta: Optional[float] = None
    n: Optional[int] = None
    k: Optional[int] = None
    label: Optional[str] = None

    def __post_init__(self):
        if not isinstance(self.kind, Kind):
            try:
                object.__setattr__(self, "kind", Kind(str(self.kind).upper()))
            except ValueError:
                raise InvalidParameter(f"unknown detector kind {self.kind!r}") from None
        if self.kind in UNTUNED:
            object.__setattr__(self, "eps", 0.0)
        object.__setattr__(self, "eps", float(self.eps))
        _check_eps(self.kind, self.eps)
        if self.kind in _NEEDS_DIMS and (self.n is None or self.k is None):
            raise InvalidParameter(f"{self.kind.value} needs the dimensions n and k")
        if self.n is not None and self.k is not None and self.k < self.n:
            raise InvalidParameter("k must be at least n")
        if self.kind is Kind.ROB and not self.zeta > 1.0:
            raise InvalidParameter("ROB: zeta must exceed 1")

    @property
    def name(self) -> str:
        return self.label or self.kind.value

    @property
    def zeta(self) -> float:
        """ROB's ``(K+1)/N (1 + eps)``."""
        return (self.k + 1) / self.n * (1.0 + self.eps)

    def with_eta(self, eta: float) -> "DetectorSpec":
        return replace(self, eta=float(eta))


def make(kind, eps: float = 0.0, n=None, k=None, label=None) -> DetectorSpec:
    return DetectorSpec(kind=Kind(kind) if not isinstance(kind, Kind) else kind, eps=eps, n=n, k=k, label=label)


def make_designed(kind, eps: float, n: int, k: int, label=None) -> DetectorSpec:
    """Feature-plane designed detector ``t_tilde - f(beta; eps)``.

    QUAD uses ``f = eps beta^2``, LIN ``f = eps beta`` and GAUSS a Gaussian
    bump of height ``eps`` centred on the H0 cluster with width
    ``2 sigma_beta^2`` from the closed-form H0 moments.
    """
    kind = Kind(kind) if not isinstance(kind, Kind) else kind
    if kind not in (Kind.QUAD, Kind.GAUSS, Kind.LIN):
        raise InvalidParameter(f"{kind.value} is not a designed detector")
    return DetectorSpec(kind=kind, eps=eps, n=n, k=k, label=label)


def lin_from_iso_snr(n: int, k: int, gamma_db: float, orthogonal: bool = False) -> DetectorSpec:
    """LIN detector with slope equal to the iso-SNR line at ``gamma_db``.

    ``orthogonal=True`` gives the selective variant with slope ``-1/m``.
    """
    m = analytics.iso_snr_line(n, k, 10.0 ** (gamma_db / 10.0)).m
    eps = -1.0 / m if orthogonal else m
    label = f"{'PERP-' if orthogonal else ''}ISO-SNR({gamma_db:g}dB)"
    return make_designed(Kind.LIN, eps, n, k, label=label)


def _nat(eps, beta, t, n, k):
    dof = k - n + 1
    h = np.arange(dof + 1)
    log_a = gammaln(dof + 1) - gammaln(h + 1) - gammaln(dof - h + 1) - gammaln(h + 1)
    beta, t = np.broadcast_arrays(np.asarray(beta, float), np.asarray(t, float))
    if eps == 0:
        return np.ones_like(beta)
    u = eps * beta * t / (1.0 + t)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = log_a + np.where(h > 0, h * np.log(u)[..., None], 0.0)
    return np.exp(-eps * beta / (1.0 + t) + logsumexp(terms, axis=-1))


def _rob(zeta, beta, perp, one_plus_s1, one_plus_t):
    crit = 1.0 / (zeta - 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        curved = one_plus_s1 * (1.0 - 1.0 / zeta) / np.power((zeta - 1.0) * perp, 1.0 / zeta)
    return np.where(perp > crit, curved, one_plus_t)


def _gauss_params(n, k):
    return analytics.h0_center(n, k)[0], analytics.h0_sigma_beta(n, k)


def feature_statistic(spec: DetectorSpec, beta, t_tilde):
    """Statistic as a function of the feature pair (arrays broadcast)."""
    b = np.asarray(beta, dtype=float)
    t = np.asarray(t_tilde, dtype=float)
    kind, eps = spec.kind, spec.eps
    if kind is Kind.KELLY:
        return t / (1.0 + t)
    if kind is Kind.AMF:
        return t / b
    if kind is Kind.ACE:
        return t / (t + 1.0 - b)
    if kind is Kind.ED:
        return (1.0 - b + t) / b
    if kind is Kind.KALSON:
        return t / (b + eps * (1.0 - b + t))
    if kind is Kind.ABORT:
        return (t + b) / (t + 1.0 + b)
    if kind is Kind.WABORT:
        return b * (1.0 + t)
    if kind is Kind.KWA:
        return np.power(b, 2.0 * eps - 1.0) * (1.0 + t)
    if kind is Kind.RAO:
        return t * b / (1.0 + t)
    if kind is Kind.CAD:
        s1 = (1.0 - b + t) / b
        s2 = t / b
        perp = 1.0 / b - 1.0
        cone = (np.sqrt(perp) - eps * np.sqrt(s2)) ** 2 / (1.0 + eps**2)
        return s1 - cone * (perp - eps**2 * s2 >= 0)
    if kind is Kind.CARD:
        d = eps * np.sqrt(t / b) - np.sqrt(1.0 / b - 1.0)
        return d * np.abs(d)
    if kind is Kind.ROB:
        return _rob(spec.zeta, b, 1.0 / b - 1.0, (1.0 + t) / b, 1.0 + t)
    if kind in (Kind.NAT, Kind.MPI):
        return _nat(eps, b, t, spec.n, spec.k)
    if kind is Kind.QUAD:
        return t - eps * b**2
    if kind is Kind.GAUSS:
        mu, sigma = _gauss_params(spec.n, spec.k)
        return t - eps * np.exp(-((b - mu) ** 2) / (2.0 * sigma**2))
    if kind is Kind.LIN:
        return t - eps * b
    raise InvalidParameter(f"unsupported detector {kind}")


def statistic(spec: DetectorSpec, fp):
    """Statistic for a :class:`FeaturePoint` (float) or :class:`FeatureCloud` (array)."""
    out = feature_statistic(spec, fp.beta, fp.t_tilde)
    return float(out) if np.ndim(out) == 0 else out


def raw_statistic(spec: DetectorSpec, z, scatter, v):
    """Statistic computed directly from raw data (batched over leading axes)."""
    if spec.kind not in RAW_FORMS:
        raise InvalidParameter(f"{spec.kind.value} has no raw-data form")
    z = np.asarray(z, dtype=complex)
    factor = linalg.cholesky(scatter)
    vb = np.broadcast_to(v, z.shape)
    zsz = linalg.quad_form(factor, z)
    vsv = linalg.quad_form(factor, vb)
    amf = np.abs(linalg.quad_form(factor, z, vb)) ** 2 / vsv
    eps = spec.eps
    kind = spec.kind
    if kind is Kind.KELLY:
        return amf / (1.0 + zsz)
    if kind is Kind.AMF:
        return amf
    if kind is Kind.ACE:
        return amf / zsz
    if kind is Kind.ED:
        return zsz
    if kind is Kind.KALSON:
        return amf / (1.0 + eps * zsz)
    if kind is Kind.ABORT:
        return (1.0 + amf) / (2.0 + zsz)
    if kind is Kind.WABORT:
        kelly = amf / (1.0 + zsz)
        return 1.0 / ((1.0 + zsz) * (1.0 - kelly) ** 2)
    if kind is Kind.RAO:
        aug = scatter + z[..., :, None] * np.conj(z[..., None, :])
        f2 = linalg.cholesky(aug)
        return np.abs(linalg.quad_form(f2, z, vb)) ** 2 / linalg.quad_form(f2, vb)
    perp = zsz - amf
    if kind is Kind.ROB:
        return _rob(spec.zeta, None, perp, 1.0 + zsz, (1.0 + zsz) / (1.0 + perp))
    if kind is Kind.CAD:
        cone = (np.sqrt(perp) - eps * np.sqrt(amf)) ** 2 / (1.0 + eps**2)
        return zsz - cone * (perp - eps**2 * amf >= 0)
    d = eps * np.sqrt(amf) - np.sqrt(perp)
    return d * np.abs(d)


def detect(spec: DetectorSpec, fp):
    """Boolean decisions (True = H1) for a point or cloud; ties go to H0."""
    if spec.eta is None:
        raise ThresholdUnset(f"{spec.name}: threshold not calibrated")
    return np.asarray(statistic(spec, fp)) > spec.eta


def decide(spec: DetectorSpec, fp) -> Hypothesis:
    return Hypothesis.H1 if bool(detect(spec, fp)) else Hypothesis.H0


@dataclass(frozen=True, eq=False)
class BoundaryCurve:
    detector: DetectorSpec
    points: np.ndarray  # shape (M, 2): beta, t_tilde

    @property
    def beta(self):
        return self.points[:, 0]

    @property
    def t_tilde(self):
        return self.points[:, 1]


def _explicit_boundary(spec: DetectorSpec, b):
    eta, eps, kind = spec.eta, spec.eps, spec.kind
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind is Kind.KELLY:
            return np.full_like(b, eta / (1.0 - eta) if eta < 1 else np.nan)
        if kind is Kind.AMF:
            return eta * b
        if kind is Kind.ACE:
            return eta / (1.0 - eta) * (1.0 - b)
        if kind is Kind.ED:
            return (eta + 1.0) * b - 1.0
        if kind is Kind.KALSON:
            den = 1.0 - eps * eta
            return ((1.0 - eps) * eta * b + eps * eta) / den if den != 0 else np.full_like(b, np.nan)
        if kind is Kind.ABORT:
            return -b + eta / (1.0 - eta)
        if kind is Kind.WABORT:
            return eta / b - 1.0
        if kind is Kind.KWA:
            return eta / np.power(b, 2.0 * eps - 1.0) - 1.0
        if kind is Kind.RAO:
            return np.where(b > eta, eta / (b - eta), np.nan)
        if kind is Kind.ROB:
            zeta = spec.zeta
            knee = 1.0 - 1.0 / zeta
            curved = eta / (1.0 - 1.0 / zeta) * b * np.power((zeta - 1.0) * (1.0 / b - 1.0), 1.0 / zeta) - 1.0
            return np.where(b < knee, curved, eta - 1.0)
        if kind is Kind.QUAD:
            return eta + eps * b**2
        if kind is Kind.GAUSS:
            mu, sigma = _gauss_params(spec.n, spec.k)
            return eta + eps * np.exp(-((b - mu) ** 2) / (2.0 * sigma**2))
        if kind is Kind.LIN:
            return eta + eps * b
    raise InvalidParameter(f"{kind.value} has no explicit boundary")


def _implicit_boundary(spec: DetectorSpec, b, t_max: float, tol: float = 1e-10):
    eta = spec.eta

    def g(t):
        return feature_statistic(spec, b, t) - eta

    lo = np.zeros_like(b)
    g_lo = g(lo)
    hi = np.full_like(b, t_max)
    g_hi = g(hi)
    # expand the bracket by doubling until the sign changes or the cutoff is hit
    for _ in range(60):
        grow = (g_lo < 0) & ~(g_hi >= 0)
        if not grow.any():
            break
        hi = np.where(grow, hi * 2.0, hi)
        g_hi = np.where(grow, g(hi), g_hi)
    ok = (g_lo <= 0) & (g_hi >= 0)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        active = ok & (hi - lo > tol) & (mid > lo) & (mid < hi)
        if not active.any():
            break
        g_mid = g(mid)
        left = active & (g_mid >= 0)
        right = active & (g_mid < 0)
        hi = np.where(left, mid, hi)
        lo = np.where(right, mid, lo)
    res_lo = np.abs(g(lo))
    res_hi = np.abs(g(hi))
    root = np.where(res_lo <= res_hi, lo, hi)
    return np.where(ok, root, np.nan)


def boundary(spec: DetectorSpec, betas, t_max: Optional[float] = None) -> BoundaryCurve:
    """Trace the decision boundary over a grid of ``beta`` in (0, 1).

    Explicit detectors evaluate their closed-form curve; CAD, CARD, NAT and
    MPI solve ``statistic(beta, t) = eta`` for ``t`` by bracketing and
    bisection. Grid points without a boundary point in ``t >= 0`` are
    dropped.
    """
    if spec.eta is None:
        raise ThresholdUnset(f"{spec.name}: threshold not calibrated")
    b = np.asarray(betas, dtype=float)
    b = b[(b > 0) & (b < 1)]
    if spec.kind in IMPLICIT:
        t = _implicit_boundary(spec, b, 20.0 if t_max is None else t_max)
    else:
        t = _explicit_boundary(spec, b)
    keep = np.isfinite(t) & (t >= 0)
    return BoundaryCurve(detector=spec, points=np.column_stack([b[keep], t[keep]]))
