"""Densities of the feature pair under H0 and (mismatched) H1.

``t_tilde`` given ``beta`` follows a complex noncentral F law with 1 and
``K-N+1`` degrees of freedom and noncentrality ``gamma * beta * cos2``;
``beta`` follows a complex (noncentral) Beta law with ``K-N+2`` and ``N-1``
degrees of freedom and noncentrality ``gamma * (1 - cos2)``. Finite sums are
evaluated in the log domain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import betainc, betaln, gammaln, logsumexp

from .errors import DomainError, InvalidParameter


@dataclass(frozen=True)
class FeatureDensityParams:
    n: int
    k: int
    gamma: float = 0.0
    cos2theta: float = 1.0

    def __post_init__(self):
        if self.k < self.n or self.n < 2:
            raise InvalidParameter(f"need k >= n >= 2, got n={self.n}, k={self.k}")
        if self.gamma < 0 or not 0.0 <= self.cos2theta <= 1.0:
            raise InvalidParameter("need gamma >= 0 and cos2theta in [0, 1]")


def _dof(n, k):
    return k - n + 1


def _check_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("t_tilde must be nonnegative")
    return t


def _check_b(b):
    b = np.asarray(b, dtype=float)
    if np.any((b <= 0) | (b >= 1)):
        raise DomainError("beta must lie in (0, 1)")
    return b


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def pdf_t_h0(t, n: int, k: int):
    """``(K-N+1) (1 + t)^-(K-N+2)``."""
    t = _check_t(t)
    dof = _dof(n, k)
    return _out(dof * np.power(1.0 + t, -(dof + 1)))


def sf_t_h0(t, n: int, k: int):
    """Tail probability ``P(t_tilde > t | H0) = (1 + t)^-(K-N+1)``."""
    t = _check_t(t)
    return _out(np.power(1.0 + t, -_dof(n, k)))


def cdf_t_h0(t, n: int, k: int):
    return _out(1.0 - np.asarray(sf_t_h0(t, n, k)))


def _log_beta_norm(n, k):
    # log of K! / ((N-2)! (K-N+1)!)
    return gammaln(k + 1) - gammaln(n - 1) - gammaln(k - n + 2)


def pdf_beta_h0(b, n: int, k: int):
    """Complex central Beta density with ``K-N+2`` and ``N-1`` degrees of freedom."""
    b = _check_b(b)
    logp = _log_beta_norm(n, k) + (k - n + 1) * np.log(b) + (n - 2) * np.log1p(-b)
    return _out(np.exp(logp))


def cdf_beta_h0(b, n: int, k: int):
    b = np.clip(np.asarray(b, dtype=float), 0.0, 1.0)
    return _out(betainc(k - n + 2, n - 1, b))


def pdf_t_given_beta(t, delta, n: int, k: int):
    """Complex noncentral F density of ``t_tilde`` with noncentrality ``delta``."""
    t = _check_t(t)
    delta = np.asarray(delta, dtype=float)
    dof = _dof(n, k)
    h = np.arange(dof + 1)
    log_coef = gammaln(dof + 1) - gammaln(h + 1) - gammaln(dof - h + 1) - gammaln(h + 1)
    t_b, d_b = np.broadcast_arrays(t, delta)
    u = d_b * t_b / (1.0 + t_b)
    with np.errstate(divide="ignore", invalid="ignore"):
        logu = np.log(u)[..., None]
        terms = log_coef + np.where(h > 0, h * logu, 0.0)
    log_sum = logsumexp(terms, axis=-1)
    logp = math.log(dof) - (dof + 1) * np.log1p(t_b) - d_b / (1.0 + t_b) + log_sum
    return _out(np.exp(logp))


def pdf_beta(b, n: int, k: int, x):
    """Complex noncentral Beta density of ``beta`` with noncentrality ``x``.

    ``1 - beta`` is a real noncentral Beta(N-1, K-N+2) variable with
    noncentrality ``2x``, i.e. a Poisson(``x``) mixture of central Beta laws
    with the first parameter shifted by the Poisson index.
    """
    b = _check_b(b)
    x = float(x)
    if x < 0:
        raise InvalidParameter("noncentrality must be nonnegative")
    if x == 0:
        return pdf_beta_h0(b, n, k)
    jmax = int(x + 12.0 * math.sqrt(x) + 40)
    j = np.arange(jmax + 1)
    log_pois = j * math.log(x) - x - gammaln(j + 1)
    a = n - 1 + j
    bb = k - n + 2
    y = 1.0 - b[..., None]
    log_beta = (a - 1) * np.log(y) + (bb - 1) * np.log(b[..., None]) - betaln(a, bb)
    return _out(np.exp(logsumexp(log_pois + log_beta, axis=-1)))


def cdf_beta(b, n: int, k: int, x):
    """CDF matching :func:`pdf_beta`: Poisson mixture of regularized incomplete Beta functions."""
    b = np.clip(np.asarray(b, dtype=float), 0.0, 1.0)
    x = float(x)
    if x < 0:
        raise InvalidParameter("noncentrality must be nonnegative")
    if x == 0:
        return cdf_beta_h0(b, n, k)
    jmax = int(x + 12.0 * math.sqrt(x) + 40)
    j = np.arange(jmax + 1)
    pois = np.exp(j * math.log(x) - x - gammaln(j + 1))
    return _out(np.sum(pois * betainc(k - n + 2, n - 1 + j, b[..., None]), axis=-1))


def pdf_joint_h1(t, b, params: FeatureDensityParams):
    """Joint density of ``(t_tilde, beta)`` for given SNR and mismatch."""
    t = _check_t(t)
    b = _check_b(b)
    n, k, g, c = params.n, params.k, params.gamma, params.cos2theta
    return _out(np.asarray(pdf_t_given_beta(t, g * b * c, n, k)) * np.asarray(pdf_beta(b, n, k, g * (1.0 - c))))


def pdf_joint_h0(t, b, n: int, k: int):
    return _out(np.asarray(pdf_t_h0(t, n, k)) * np.asarray(pdf_beta_h0(b, n, k)))


def integrate_t_h0(n: int, k: int, upper: float = 50.0, epsabs: float = 1e-10) -> float:
    """Total mass of :func:`pdf_t_h0`: adaptive quadrature on ``[0, upper]`` plus exact tail."""
    body, _ = integrate.quad(pdf_t_h0, 0.0, upper, args=(n, k), epsabs=epsabs, epsrel=1e-12, limit=200)
    return body + sf_t_h0(upper, n, k)


def integrate_beta_h0(n: int, k: int, epsabs: float = 1e-10) -> float:
    val, _ = integrate.quad(pdf_beta_h0, 0.0, 1.0, args=(n, k), epsabs=epsabs, epsrel=1e-12, limit=200)
    return val


def integrate_joint_h1(params: FeatureDensityParams, epsabs: float = 1e-9) -> float:
    """Double integral of :func:`pdf_joint_h1` over ``(0, inf) x (0, 1)``.

    ``t`` is mapped to ``u = t / (1 + t)`` in ``[0, 1)`` so both integrals
    run over finite ranges.
    """

    def integrand(u, b):
        t = u / (1.0 - u)
        return pdf_joint_h1(t, b, params) / (1.0 - u) ** 2

    val, _ = integrate.dblquad(integrand, 1e-300, 1.0 - 1e-16, 0.0, 1.0 - 1e-16, epsabs=epsabs, epsrel=1e-10)
    return val


def conditional_mean_t(beta: float, params: FeatureDensityParams) -> float:
    """``E[t_tilde | beta]`` by quadrature (oracle for the closed form)."""
    delta = params.gamma * beta * params.cos2theta

    def integrand(u):
        t = u / (1.0 - u)
        return t * pdf_t_given_beta(t, delta, params.n, params.k) / (1.0 - u) ** 2

    val, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-12, epsrel=1e-11, limit=400)
    return val
