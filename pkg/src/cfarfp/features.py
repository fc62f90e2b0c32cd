"""Invariant feature extraction: snapshot -> (s1, s2) -> (beta, t_tilde)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import NotPositiveDefinite

#: relative tolerance on the imaginary residue of the quadratic form z^H S^-1 z
IMAG_TOL = 1e-9

_extractions = 0


def extraction_count() -> int:
    """Number of snapshots mapped to features in this process so far."""
    return _extractions


class ScatterSingular(NotPositiveDefinite):
    pass


@dataclass(frozen=True)
class FeaturePoint:
    beta: float
    t_tilde: float
    s1: float
    s2: float

    def __post_init__(self):
        assert 0.0 < self.beta <= 1.0, f"beta={self.beta} out of (0, 1]"
        assert self.t_tilde >= 0.0, f"t_tilde={self.t_tilde} negative"

    @classmethod
    def from_s(cls, s1: float, s2: float) -> "FeaturePoint":
        beta, t = to_plane(s1, s2)
        return cls(beta=float(beta), t_tilde=float(t), s1=float(s1), s2=float(s2))


@dataclass(frozen=True, eq=False)
class FeatureCloud:
    """Column arrays of feature points, one entry per trial (ascending index)."""

    beta: np.ndarray
    t_tilde: np.ndarray
    s1: np.ndarray
    s2: np.ndarray

    def __len__(self):
        return len(self.beta)

    def __getitem__(self, i) -> FeaturePoint:
        return FeaturePoint(float(self.beta[i]), float(self.t_tilde[i]), float(self.s1[i]), float(self.s2[i]))

    @classmethod
    def empty(cls) -> "FeatureCloud":
        e = np.empty(0)
        return cls(e, e, e, e)

    @classmethod
    def concat(cls, parts) -> "FeatureCloud":
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in ("beta", "t_tilde", "s1", "s2")))

    def points(self):
        return [self[i] for i in range(len(self))]


def to_plane(s1, s2):
    """``(beta, t_tilde) = (1, s2) / (1 + s1 - s2)``."""
    beta = 1.0 / (1.0 + s1 - s2)
    return beta, s2 * beta


def statistics_from_raw(z, scatter, v):
    """``(s1, s2, s1 - s2)`` for (batches of) raw data.

    ``s1 - s2`` is returned as the squared norm of the whitened CUT's
    component orthogonal to the whitened steering, which avoids the
    cancellation of subtracting two nearly equal numbers.
    """
    try:
        factor = linalg.cholesky(scatter)
    except NotPositiveDefinite as exc:
        raise ScatterSingular(f"scatter matrix not positive definite: {exc}") from None
    zw = linalg.solve_lower(factor, z)
    vw = linalg.solve_lower(factor, np.broadcast_to(v, np.shape(z)))
    vv = np.sum(np.abs(vw) ** 2, axis=-1)
    zv = np.sum(np.conj(zw) * vw, axis=-1)
    s1 = np.sum(np.abs(zw) ** 2, axis=-1)
    s2 = np.abs(zv) ** 2 / vv
    resid = zw - vw * (np.conj(zv) / vv)[..., None]
    perp = np.sum(np.abs(resid) ** 2, axis=-1)
    return s1, s2, perp


def extract_batch(z, scatter, v) -> FeatureCloud:
    global _extractions
    s1, s2, perp = statistics_from_raw(z, scatter, v)
    beta = 1.0 / (1.0 + perp)
    _extractions += int(np.size(beta))
    return FeatureCloud(beta=beta, t_tilde=s2 * beta, s1=s1, s2=s2)


def extract(snap, v) -> FeaturePoint:
    """Map one :class:`~cfarfp.sampling.Snapshot` to its feature point."""
    z = np.asarray(snap.z, dtype=complex)
    try:
        factor = linalg.cholesky(snap.scatter)
    except NotPositiveDefinite as exc:
        raise ScatterSingular(f"scatter matrix not positive definite: {exc}") from None
    s1_complex = linalg.quad_form(factor, z, z.copy())
    if abs(s1_complex.imag) > IMAG_TOL * max(abs(s1_complex.real), 1e-300):
        raise ArithmeticError(f"z^H S^-1 z has imaginary residue {s1_complex.imag:g}")
    cloud = extract_batch(z[None, :], np.asarray(snap.scatter)[None], v)
    return cloud[0]


def kelly_amf_pair(fp):
    """Kelly's and the AMF statistic from a feature point (or cloud)."""
    t_kelly = fp.t_tilde / (1.0 + fp.t_tilde)
    t_amf = fp.t_tilde / fp.beta
    return t_kelly, t_amf
