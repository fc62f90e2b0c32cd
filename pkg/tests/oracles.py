"""Independent reference computations used by the tests.

Nothing here calls into the package's numerical routines: quadratic forms use
dense inverses, special functions come from mpmath, and detection
probabilities come from scipy's noncentral F and Beta laws.
"""
import math

import mpmath
import numpy as np
from scipy import integrate, stats


def random_hpd(n, rng, cond=10.0):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, _ = np.linalg.qr(a)
    lam = np.geomspace(1.0, cond, n)
    return (q * lam) @ q.conj().T


def random_cvec(n, rng):
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)


def dense_quad(m, a, b):
    return np.conj(a) @ np.linalg.inv(m) @ b


def dense_features(z, s, v):
    si = np.linalg.inv(s)
    s1 = float(np.real(np.conj(z) @ si @ z))
    s2 = float(abs(np.conj(z) @ si @ v) ** 2 / np.real(np.conj(v) @ si @ v))
    beta = 1.0 / (1.0 + s1 - s2)
    return s1, s2, beta, s2 * beta


def exp_2f2_mp(a1, a2, b1, b2, x, dps=40):
    with mpmath.workdps(dps):
        return float(mpmath.exp(-x) * mpmath.hyp2f2(a1, a2, b1, b2, x))


def mu_beta_mp(n, k, x, dps=40):
    with mpmath.workdps(dps):
        g = (n - 1) / mpmath.mpf(k + 1) * mpmath.exp(-x) * mpmath.hyp2f2(k + 1, n, n - 1, k + 2, x)
        return float(1 - g)


def kelly_threshold(pfa, n, k):
    """Kelly threshold on ``t_tilde/(1+t_tilde)`` from the closed-form H0 tail."""
    t = pfa ** (-1.0 / (k - n + 1)) - 1.0
    return t / (1.0 + t)


def kelly_pd(gamma, pfa, n, k, eta=None):
    """Matched Kelly P_d: noncentral F tail averaged over the Beta law of beta.

    ``eta`` overrides the analytic threshold on ``t_tilde/(1+t_tilde)``.
    """
    dof = k - n + 1
    eta = kelly_threshold(pfa, n, k) if eta is None else eta
    x = eta / (1.0 - eta) * dof
    beta = stats.beta(k - n + 2, n - 1)
    return integrate.quad(lambda b: stats.ncf(2, 2 * dof, 2 * gamma * b).sf(x) * beta.pdf(b), 0, 1,
                          limit=200)[0]


def ed_pd(gamma, pfa, n, k, eta=None):
    """Matched ED P_d: ``z^H S^-1 z`` scaled is noncentral F(2N, 2(K-N+1))."""
    dof = k - n + 1
    x = stats.f(2 * n, 2 * dof).isf(pfa) if eta is None else eta * dof / n
    return stats.ncf(2 * n, 2 * dof, 2 * gamma).sf(x)
