"""Dense matrix utilities shared by the integrators and the stability tools.

Matrices are plain :class:`numpy.ndarray` objects.  ``expm`` accepts stacks of
shape ``(..., n, n)`` so that the full Lawson schemes can exponentiate one
stage matrix per simulated path in a single call.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "LinAlgFailure",
    "as_matrix",
    "expm",
    "expm_pair",
    "kron",
    "spectral_radius",
    "commutator",
    "is_commuting",
    "solve",
]


class LinAlgFailure(ArithmeticError):
    """Raised when an eigenvalue routine or a linear solve cannot be trusted."""


# Padé numerator coefficients b_0..b_m and the 1-norm bounds up to which the
# degree-m approximant is accurate to double precision without scaling.
_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (
        17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0,
    ),
    13: (
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0, 129060195264000.0, 10559470521600.0,
        670442572800.0, 33522128640.0, 1323241920.0, 40840800.0, 960960.0,
        16380.0, 182.0, 1.0,
    ),
}
_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}


def as_matrix(a, *, square=False, name="matrix"):
    """Return ``a`` as a finite 2-d array, raising ``ValueError`` otherwise."""
    m = np.asarray(a)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2 or m.shape[0] == 0 or m.shape[1] == 0:
        raise ValueError(f"{name} must be a non-empty 2-d array, got shape {m.shape}")
    if not np.issubdtype(m.dtype, np.inexact):
        m = m.astype(float)
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    if square and m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    return m


def _check_stack(a):
    a = np.asarray(a)
    if not np.issubdtype(a.dtype, np.inexact):
        a = a.astype(float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2] or a.shape[-1] == 0:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def _pade_parts(a, m):
    """Odd and even parts ``u, v`` of the degree-``m`` Padé approximant: ``r(a) = (v - u)^{-1} (v + u)``."""
    b = _PADE[m]
    n = a.shape[-1]
    ident = np.broadcast_to(np.eye(n, dtype=a.dtype), a.shape)
    a2 = a @ a
    if m < 13:
        powers = [ident, a2]
        for _ in range(2, m // 2 + 1):
            powers.append(powers[-1] @ a2)
        u = sum(b[2 * k + 1] * powers[k] for k in range(len(powers)))
        v = sum(b[2 * k] * powers[k] for k in range(len(powers)))
        u = a @ u
    else:
        a4 = a2 @ a2
        a6 = a4 @ a2
        u = a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
        u = a @ (u + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
        v = a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
        v = v + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident
    return u, v


def _pade(a, m):
    u, v = _pade_parts(a, m)
    return np.linalg.solve(v - u, v + u)


_DEGREES = np.array([3, 5, 7, 9, 13])
_THETAS = np.array([_THETA[m] for m in (3, 5, 7, 9)])


def _degree_and_scaling(norms):
    """Padé degree and squaring count per 1-norm (vectorized)."""
    idx = np.searchsorted(_THETAS, norms, side="left")
    degree = _DEGREES[idx]
    with np.errstate(divide="ignore"):
        s = np.ceil(np.log2(np.where(idx == 4, norms, _THETA[13]) / _THETA[13]))
    return degree, np.maximum(s, 0).astype(int)


def _expm_stack(a, both):
    a = _check_stack(a)
    n = a.shape[-1]
    batch_shape = a.shape[:-2]
    flat = a.reshape((-1, n, n))
    out = np.empty_like(flat)
    inv = np.empty_like(flat) if both else None
    norms = np.abs(flat).sum(axis=-2).max(axis=-1)
    zero = norms == 0.0
    out[zero] = np.eye(n, dtype=flat.dtype)
    if both:
        inv[zero] = np.eye(n, dtype=flat.dtype)
    active = np.flatnonzero(~zero)
    degree, squarings = _degree_and_scaling(norms[active])
    key = degree * 4096 + squarings
    groups = key[:1] if key.size == 1 else np.unique(key)
    for k in groups:
        idx = active[key == k]
        m, s = int(k // 4096), int(k % 4096)
        u, v = _pade_parts(flat[idx] / (2.0 ** s), m)
        r = np.linalg.solve(v - u, v + u)
        for _ in range(s):
            r = r @ r
        out[idx] = r
        if both:
            # u is odd and v even in a, so the approximant of -a swaps the roles
            r = np.linalg.solve(v + u, v - u)
            for _ in range(s):
                r = r @ r
            inv[idx] = r
    if both:
        return out.reshape(batch_shape + (n, n)), inv.reshape(batch_shape + (n, n))
    return out.reshape(batch_shape + (n, n))


def expm_pair(a):
    """``(exp(a), exp(-a))`` sharing one Padé evaluation; same values as two :func:`expm` calls."""
    return _expm_stack(a, True)


def expm(a):
    """Matrix exponential by scaling and squaring with a Padé core.

    The degree (3, 5, 7, 9 or 13) and the number of squarings are chosen per
    matrix from its 1-norm, so the result for one matrix does not depend on
    what else is in the stack.  A zero matrix maps to the identity exactly.

    Args:
        a: square matrix or stack of square matrices, shape ``(..., n, n)``.

    Returns:
        Array of the same shape holding ``exp(a)``.
    """
    return _expm_stack(a, False)


def kron(a, b):
    """Kronecker product with the standard block layout."""
    return np.kron(as_matrix(a, name="a"), as_matrix(b, name="b"))


def spectral_radius(a):
    """Largest eigenvalue modulus of a square matrix.

    Uses LAPACK's Hessenberg reduction plus shifted QR (``numpy.linalg.eigvals``).
    Non-convergence is raised as :class:`LinAlgFailure`.
    """
    a = as_matrix(a, square=True)
    try:
        eig = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise LinAlgFailure(f"eigenvalue iteration failed: {exc}") from exc
    return float(np.max(np.abs(eig)))


def commutator(a, b):
    """Return ``a @ b - b @ a``."""
    a = as_matrix(a, square=True, name="a")
    b = as_matrix(b, square=True, name="b")
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a @ b - b @ a


def is_commuting(a, b, tol=1e-12):
    """True when ``max|[a, b]| <= tol * (1 + |a| |b|)`` in the max-norm."""
    c = commutator(a, b)
    scale = 1.0 + np.max(np.abs(a)) * np.max(np.abs(b))
    return bool(np.max(np.abs(c)) <= tol * scale)


def solve(a, rhs, *, rtol=1e-12):
    """Solve ``a x = rhs`` and verify the residual.

    Raises:
        LinAlgFailure: if ``a`` is singular or the residual exceeds
            ``rtol * (1 + |rhs|)``; the message carries a condition estimate.
    """
    a = as_matrix(a, square=True)
    rhs = np.asarray(rhs)
    if rhs.shape[0] != a.shape[0]:
        raise ValueError(f"rhs has {rhs.shape[0]} rows, matrix has {a.shape[0]}")
    try:
        x = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:
        raise LinAlgFailure(f"singular matrix (cond ~ {np.linalg.cond(a):.3e})") from exc
    residual = np.max(np.abs(a @ x - rhs)) if rhs.size else 0.0
    bound = rtol * (1.0 + (np.max(np.abs(rhs)) if rhs.size else 0.0))
    if not np.isfinite(residual) or residual > bound:
        raise LinAlgFailure(
            f"ill-conditioned solve: residual {residual:.3e} > {bound:.3e} "
            f"(cond ~ {np.linalg.cond(a):.3e})"
        )
    return x
