"""Closed-form geometry of feature-plane clusters.

Centers, spreads and orientation of the ``(beta, t_tilde)`` cloud as a function
of SNR ``gamma`` and whitened mismatch ``cos^2(theta)``, the 1-sigma ellipse,
and the straight-line approximation of iso-SNR center trajectories.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import InvalidParameter, NonConvergence

MAX_TERMS = 10**6
_RENORM = 1e250
_LOG_RENORM = math.log(_RENORM)


def exp_weighted_2f2(a1, a2, b1, b2, x):
    """``exp(-x) * 2F2(a1, a2; b1, b2; x)`` for ``x >= 0``.

    Summed by forward recursion on the weighted terms, starting from
    ``exp(-x)``; the unweighted function (which grows like ``exp(x)``) is
    never formed. Scalar parameters, scalar or array ``x``.
    """
    for b in (b1, b2):
        if b <= 0 and float(b).is_integer():
            raise InvalidParameter(f"lower parameter {b} is a nonpositive integer")
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs < 0) or not np.all(np.isfinite(xs)):
        raise InvalidParameter("x must be finite and nonnegative")
    flat = xs.ravel()
    # term = lin * exp(logscale); large x starts from a rescaled term so exp(-x) cannot underflow
    big = flat > 700.0
    lin = np.where(big, 1.0, np.exp(-flat))
    logscale = np.where(big, -flat, 0.0)
    total = lin.copy()
    active = flat > 0
    n = 0
    while np.any(active):
        if n >= MAX_TERMS:
            raise NonConvergence(f"2F2 series not converged after {MAX_TERMS} terms")
        ratio = (a1 + n) * (a2 + n) / ((b1 + n) * (b2 + n) * (n + 1))
        idx = np.flatnonzero(active)
        lin[idx] *= ratio * flat[idx]
        total[idx] += lin[idx]
        over = idx[np.abs(lin[idx]) > _RENORM]
        if over.size:
            lin[over] /= _RENORM
            total[over] /= _RENORM
            logscale[over] += _LOG_RENORM
        n += 1
        term = np.abs(lin[idx])
        done = (term == 0.0) | ((n > flat[idx]) & (term <= 1e-16 * np.abs(total[idx])))
        active[idx[done]] = False
    out = (total * np.exp(logscale)).reshape(xs.shape)
    return float(out[0]) if np.ndim(x) == 0 else out


def mu_beta_closed_form(n: int, k: int, x):
    """Mean of ``beta`` via the lower incomplete gamma function.

    ``(K-N+2) (-x)^-(K+1) exp(-x) gamma(K+1, -x)``, evaluated as the positive
    series ``(K-N+2) sum_j exp(-x) x^j / ((K+1+j) j!)`` with each term taken
    from log-gamma directly. Independent of :func:`exp_weighted_2f2`.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(xs)
    for i, xv in enumerate(xs.ravel()):
        if xv == 0.0:
            out.flat[i] = (k - n + 2) / (k + 1)
            continue
        jmax = int(xv + 40.0 * math.sqrt(xv) + 60)
        j = np.arange(jmax + 1, dtype=float)
        logt = j * math.log(xv) - gammaln(j + 1) - xv - np.log(k + 1 + j)
        out.flat[i] = (k - n + 2) * math.fsum(np.exp(logt))
    return float(out[0]) if np.ndim(x) == 0 else out


def g_function(n: int, k: int, gamma):
    """``(N-1)/(K+1) exp(-gamma) 2F2(K+1, N; N-1, K+2; gamma)``."""
    return (n - 1) / (k + 1) * exp_weighted_2f2(k + 1, n, n - 1, k + 2, gamma)


def _check_dims(n, k, need_variance=True):
    if n < 2 or k < n:
        raise InvalidParameter(f"need n >= 2 and k >= n, got n={n}, k={k}")
    if need_variance and k < n + 2:
        raise InvalidParameter(f"variances need k >= n + 2, got n={n}, k={k}")


def cluster_center(n: int, k: int, gamma, cos2theta):
    """Cluster center ``(mu_beta, mu_t)``; broadcasts over array inputs."""
    _check_dims(n, k, need_variance=False)
    if k == n:
        raise InvalidParameter("mean of t_tilde needs k > n")
    gamma, cos2theta = np.broadcast_arrays(np.asarray(gamma, float), np.asarray(cos2theta, float))
    x = gamma * (1.0 - cos2theta)
    mu_beta = 1.0 - g_function(n, k, x)
    mu_t = (1.0 + gamma * mu_beta * cos2theta) / (k - n)
    if np.ndim(mu_beta) == 0:
        return float(mu_beta), float(mu_t)
    return mu_beta, mu_t


def h0_center(n: int, k: int):
    return (k - n + 2) / (k + 1), 1.0 / (k - n)


def h0_sigma_beta(n: int, k: int) -> float:
    return math.sqrt(n * (n - 1) * (k + 1) - (n - 1) ** 2 * (k + 2)) / ((k + 1) * math.sqrt(k + 2))


def h0_sigma_t(n: int, k: int) -> float:
    return math.sqrt(k - n + 1) / ((k - n) * math.sqrt(k - n - 1))


@dataclass(frozen=True, eq=False)
class ClusterMoments:
    mu_beta: float
    mu_t: float
    sigma_beta: float
    sigma_t: float
    rho: float
    ellipse_axes: tuple
    ellipse_rotation: np.ndarray

    @property
    def covariance(self) -> np.ndarray:
        c = self.rho * self.sigma_beta * self.sigma_t
        return np.array([[self.sigma_beta**2, c], [c, self.sigma_t**2]])

    @property
    def angle(self) -> float:
        """Rotation of the major axis, in (-pi/2, pi/2]."""
        return math.atan2(self.ellipse_rotation[1, 0], self.ellipse_rotation[0, 0])


def eig_sym2(a: float, b: float, c: float):
    """Eigen-decomposition of ``[[a, b], [b, c]]`` in closed form.

    Returns ``(lam_major, lam_minor, U)`` with the first column of ``U`` the
    major-axis direction, at an angle in (-pi/2, pi/2].
    """
    mean = 0.5 * (a + c)
    rad = math.hypot(0.5 * (a - c), b)
    phi = 0.5 * math.atan2(2.0 * b, a - c)
    if phi <= -math.pi / 2:
        phi += math.pi
    u = np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])
    return mean + rad, max(mean - rad, 0.0), u


def cluster_moments(n: int, k: int, gamma: float, cos2theta: float) -> ClusterMoments:
    """Mean, spreads, correlation and 1-sigma ellipse of the cluster."""
    _check_dims(n, k)
    if gamma < 0 or not 0.0 <= cos2theta <= 1.0:
        raise InvalidParameter("need gamma >= 0 and cos2theta in [0, 1]")
    x = gamma * (1.0 - cos2theta)
    gc = gamma * cos2theta
    d = k - n
    one_minus_mu = (n - 1) / (k + 1) * exp_weighted_2f2(k + 1, n, n - 1, k + 2, x)
    mu_beta = 1.0 - one_minus_mu
    second = n * (n - 1) / ((k + 2) * (k + 1)) * exp_weighted_2f2(k + 1, n + 1, n - 1, k + 3, x)
    var_beta = max(second - one_minus_mu**2, 0.0)
    mu_t = (1.0 + gc * mu_beta) / d
    e_beta2 = var_beta + mu_beta**2
    var_t = (gc**2 * e_beta2 + (1.0 + 2.0 * gc * mu_beta) * (d + 1)) / (d**2 * (d - 1)) + gc**2 * var_beta / d**2
    cov = mu_beta / d + gc * e_beta2 / d - mu_beta * mu_t
    sigma_beta, sigma_t = math.sqrt(var_beta), math.sqrt(var_t)
    rho = cov / (sigma_beta * sigma_t) if sigma_beta > 0 else 0.0
    if gamma == 0:
        rho = 0.0
    rho = min(max(rho, -1.0), 1.0)
    c = rho * sigma_beta * sigma_t
    lam1, lam2, u = eig_sym2(var_beta, c, var_t)
    return ClusterMoments(mu_beta=mu_beta, mu_t=mu_t, sigma_beta=sigma_beta, sigma_t=sigma_t, rho=rho,
                          ellipse_axes=(math.sqrt(lam1), math.sqrt(lam2)), ellipse_rotation=u)


def ellipse_points(cm: ClusterMoments, count: int) -> np.ndarray:
    """``count`` points of the 1-sigma ellipse, shape ``(count, 2)``.

    The angular parameter sweeps one full turn ``[0, 2 pi)``.
    """
    if count < 3:
        raise InvalidParameter("count must be at least 3")
    s = 2.0 * np.pi * np.arange(count) / count
    circle = np.stack([np.cos(s), np.sin(s)])
    pts = cm.ellipse_rotation @ (np.asarray(cm.ellipse_axes)[:, None] * circle)
    return (pts + np.array([[cm.mu_beta], [cm.mu_t]])).T


@dataclass(frozen=True)
class IsoSnrLine:
    gamma: float
    m: float
    q: float

    def __call__(self, beta):
        return self.m * beta + self.q


def iso_snr_line(n: int, k: int, gamma: float) -> IsoSnrLine:
    """Line through the cluster centers at ``cos^2 = 0`` and ``cos^2 = 1``.

    The slope is evaluated as ``(K+2) / ((K-N) e^-g 2F2(K+2, 1; K+3, 1; g))``,
    an algebraic rearrangement of the textbook expression that avoids the
    cancellation in ``(K+1) g(gamma) + 1 - N`` at small SNR. At exactly
    ``gamma = 0`` both centers coincide and the horizontal line through the
    H0 center is returned.
    """
    _check_dims(n, k, need_variance=False)
    if gamma < 0:
        raise InvalidParameter("gamma must be nonnegative")
    if gamma == 0:
        return IsoSnrLine(gamma=0.0, m=0.0, q=1.0 / (k - n))
    m = (k + 2) / ((k - n) * exp_weighted_2f2(k + 2, 1, k + 3, 1, gamma))
    q = m * (g_function(n, k, gamma) - 1.0) + 1.0 / (k - n)
    return IsoSnrLine(gamma=float(gamma), m=float(m), q=float(q))


def iso_snr_slope_textbook(n: int, k: int, gamma: float) -> float:
    """Slope in its original form; kept as a cross-check for :func:`iso_snr_line`."""
    g = g_function(n, k, gamma)
    return (k + 2 - n) * gamma / ((k - n) * ((k + 1) * g + 1 - n))
