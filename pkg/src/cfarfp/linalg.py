"""Complex Hermitian linear algebra for the detection chain.

Everything works on numpy ``complex128`` arrays and broadcasts over leading
batch dimensions, so the Monte Carlo code can push a whole chunk of trials
through one call. Matrices are never inverted explicitly: a Cholesky factor
plus triangular solves gives every quadratic form the chain needs.
"""
import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite


def hermitian_from_lower(m):
    """Build an exactly Hermitian matrix from the lower triangle of ``m``."""
    m = np.asarray(m, dtype=complex)
    low = np.tril(m, -1)
    diag = np.real(np.diagonal(m, axis1=-2, axis2=-1))
    out = low + np.conj(np.swapaxes(low, -1, -2))
    idx = np.arange(m.shape[-1])
    out[..., idx, idx] = diag
    return out


def cholesky(m):
    """Lower-triangular factor ``L`` with ``L @ L^H == m``.

    Parameters
    ----------
    m : array_like, shape (..., N, N)
        Hermitian positive definite matrix (or stack of them).

    Raises
    ------
    NotPositiveDefinite
        If any pivot is not strictly positive, which is what happens when the
        scatter matrix is built from fewer than N secondary vectors.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise DimensionMismatch(f"expected square matrix, got shape {m.shape}")
    try:
        factor = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    diag = np.real(np.diagonal(factor, axis1=-2, axis2=-1))
    if not np.all(np.isfinite(factor)) or np.any(diag <= 0.0):
        raise NotPositiveDefinite("non-positive pivot in Cholesky factorization")
    return factor


def solve_lower(factor, b):
    """Forward substitution ``L x = b`` for a (batched) lower factor.

    ``b`` may be a vector ``(..., N)`` or a matrix ``(..., N, M)``.
    """
    factor = np.asarray(factor)
    b = np.asarray(b, dtype=complex)
    n = factor.shape[-1]
    vector = b.ndim == factor.ndim - 1
    if vector:
        b = b[..., None]
    if b.shape[-2] != n:
        raise DimensionMismatch(f"factor is {n}x{n}, right-hand side has {b.shape[-2]} rows")
    shape = np.broadcast_shapes(factor.shape[:-2], b.shape[:-2]) + b.shape[-2:]
    x = np.empty(shape, dtype=complex)
    for i in range(n):
        acc = b[..., i, :]
        if i:
            acc = acc - np.einsum("...j,...jm->...m", factor[..., i, :i], x[..., :i, :])
        x[..., i, :] = acc / factor[..., i, i][..., None]
    return x[..., 0] if vector else x


def quad_form(factor, a, b=None):
    """Sesquilinear form ``a^H M^{-1} b`` given the Cholesky factor of ``M``.

    With ``b`` omitted (or the same object as ``a``) the quadratic form is
    returned as a nonnegative real; otherwise the complex value.
    """
    a = np.asarray(a, dtype=complex)
    if a.shape[-1] != np.shape(factor)[-1]:
        raise DimensionMismatch(f"vector length {a.shape[-1]} does not match factor")
    wa = solve_lower(factor, a)
    if b is None or b is a:
        return np.sum(np.abs(wa) ** 2, axis=-1)
    b = np.asarray(b, dtype=complex)
    if b.shape[-1] != a.shape[-1]:
        raise DimensionMismatch("a and b have different lengths")
    wb = solve_lower(factor, b)
    return np.sum(np.conj(wa) * wb, axis=-1)
