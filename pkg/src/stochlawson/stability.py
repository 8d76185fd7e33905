"""Mean-square stability of the linear test equations and of the schemes.

Scalar test equation ``dX = (lam + sigma) X dt + mu X dW``: closed-form
one-step second-moment factors ``R(z, u, v)`` with ``z = h Re(lam)``,
``u = h sigma``, ``v = sqrt(h) mu``.

Linear systems ``dX = A_0 X dt + sum_m B_m X dW_m``: second moments
``P = E(X X^H)`` evolve as ``vec P' = S vec P`` (exact solution, continuous
time) and ``vec P_{n+1} = Sbar vec P_n`` (one scheme step), with
column-major ``vec``.  A scheme is mean-square stable when ``rho(Sbar) < 1``.
Scheme matrices take the scaled matrices ``Abar = h A_0``,
``Bbar_m = sqrt(h) B_m`` and optionally ``Gbar = h G`` for a linear drift
remainder ``g_0(x) = G x`` that Lawson schemes keep outside the exponent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linalg import LinAlgFailure, expm, solve, spectral_radius

__all__ = [
    "StabilityPoint",
    "StabilityMatrices",
    "SCHEME_KINDS",
    "r_em_dsl",
    "r_platen_dsl",
    "exact_ms_stable",
    "sufficient_em_dsl",
    "sufficient_platen_dsl",
    "sde_stability_matrix",
    "sde_ms_stable",
    "scheme_stability_matrix",
    "stability_matrices",
    "exact_second_moment",
    "scheme_moment_step",
    "iterate_moments",
    "exact_step_factor",
    "orthogonal_matrices",
    "oscillator_matrices",
    "problem_matrices",
    "scheme_rho",
    "RegionColumn",
    "region_scan",
]

SCHEME_KINDS = (
    "em_dsl",
    "platen_dsl",
    "implicit_platen_printed",
    "implicit_platen_derived",
    "implicit_platen_exact",
)


@dataclass(frozen=True)
class StabilityPoint:
    """Arguments of the scalar stability functions: ``z = h Re lam``, ``u = h sigma``, ``v = sqrt(h) mu``."""

    z: float
    u: complex = 0.0
    v: complex = 0.0

    def __post_init__(self):
        if not all(np.isfinite(x) for x in (self.z, self.u, self.v)):
            raise ValueError("stability point must be finite")

    @classmethod
    def from_parameters(cls, lam, sigma, mu, h):
        return cls(h * complex(lam).real, h * sigma, math.sqrt(h) * mu)


def r_em_dsl(p):
    """``R(z, u, v) = e^{2z} (|1 + u|^2 + |v|^2)`` for Euler-Maruyama DSL."""
    return math.exp(2.0 * p.z) * (abs(1.0 + p.u) ** 2 + abs(p.v) ** 2)


def r_platen_dsl(p):
    """``R(z, u, v) = e^{2z} (|1 + u|^2 + |v|^2 (1 + |u + v|^2 / 2))`` for Platen DSL."""
    v2 = abs(p.v) ** 2
    return math.exp(2.0 * p.z) * (abs(1.0 + p.u) ** 2 + v2 * (1.0 + 0.5 * abs(p.u + p.v) ** 2))


def exact_ms_stable(lam, sigma, mu):
    """``2 Re(lam + sigma) + |mu|^2 < 0``."""
    return bool(2.0 * complex(lam + sigma).real + abs(mu) ** 2 < 0.0)


def sufficient_em_dsl(lam, sigma, mu):
    """Step-size independent stability of EM DSL: exact stability and ``|sigma| <= -Re lam``."""
    return exact_ms_stable(lam, sigma, mu) and abs(sigma) <= -complex(lam).real


def sufficient_platen_dsl(lam, sigma, mu):
    """Step-size independent stability of Platen DSL.

    Exact stability together with ``|sigma|^2 + |mu|^4 / 2 <= 2 Re(lam)^2``,
    ``Re(sigma conj(mu)) <= 0`` and ``|mu|^2 |sigma|^2 <= -8/3 Re(lam)^3``.
    """
    re = complex(lam).real
    s2, m2 = abs(sigma) ** 2, abs(mu) ** 2
    return (
        exact_ms_stable(lam, sigma, mu)
        and s2 + 0.5 * m2 * m2 <= 2.0 * re * re
        and (complex(sigma) * complex(mu).conjugate()).real <= 0.0
        and m2 * s2 <= -8.0 / 3.0 * re**3
    )


def _mat(a, d=None):
    m = np.atleast_2d(np.asarray(a))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if d is not None and m.shape[0] != d:
        raise ValueError(f"dimension mismatch: {m.shape[0]} vs {d}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def _bs(Bs, d):
    if isinstance(Bs, np.ndarray) and Bs.ndim == 2:
        Bs = [Bs]
    return [_mat(b, d) for b in Bs]


def _kk(a, b=None):
    """Second-moment map of ``Y -> a Y`` under column-major vec: ``conj(a) (x) a``."""
    b = a if b is None else b
    return np.kron(np.conj(a), b)


def sde_stability_matrix(A0, Bs):
    """``S = I (x) A_0 + A_0 (x) I + sum_m B_m (x) B_m`` for real matrices."""
    A0 = _mat(A0)
    d = A0.shape[0]
    ident = np.eye(d)
    S = np.kron(ident, A0) + np.kron(A0, ident)
    for b in _bs(Bs, d):
        S = S + np.kron(b, b)
    return S


def sde_ms_stable(S):
    """All eigenvalues of ``S`` have negative real part."""
    try:
        eig = np.linalg.eigvals(S)
    except np.linalg.LinAlgError as exc:
        raise LinAlgFailure(f"eigenvalue iteration failed: {exc}") from exc
    return bool(np.max(eig.real) < 0.0)


def scheme_stability_matrix(kind, Abar, Bbar, Gbar=None):
    """One-step second-moment operator of a scheme on a linear system.

    Kinds:
        ``em_dsl``: ``e^Abar (x) e^Abar ((I + Gbar) (x) (I + Gbar) + sum Bbar (x) Bbar)``.
        ``platen_dsl``: ``e^Abar (x) e^Abar ((I + Gbar) (x) (I + Gbar) + Bbar (x) Bbar + 1/2 Cbar (x) Cbar)``
            with ``Cbar = e^{-Abar} Bbar e^{Abar} (I + Gbar + Bbar) - Bbar``; the 1/2 is
            ``E((dW^2 - h)^2) / (4 h^2)``.
        ``implicit_platen_printed``: ``(I + Abar) (x) (I + Abar) + Bbar (x) Bbar + Bbar^2 (x) Bbar^2``.
        ``implicit_platen_derived``: ``M (x) M (I (x) I + Bbar (x) Bbar + Bbar^2 (x) Bbar^2)``
            with ``M = (I - Abar)^{-1}``.
        ``implicit_platen_exact``: the moment operator of the implemented
            drift-implicit step, ``M (x) M (I (x) I + Bbar (x) Bbar + 1/2 Chat (x) Chat)``
            with ``Chat = Bbar (Abar + Bbar)``.

    For the implicit kinds ``Gbar`` is added to ``Abar`` (no Lawson split).
    The Platen kinds need a single noise matrix.
    """
    Abar = _mat(Abar)
    d = Abar.shape[0]
    Bs = _bs(Bbar, d)
    ident = np.eye(d)
    G = np.zeros_like(Abar) if Gbar is None else _mat(Gbar, d)
    if kind not in SCHEME_KINDS:
        raise ValueError(f"unknown scheme kind {kind!r}; choose from {', '.join(SCHEME_KINDS)}")
    if kind != "em_dsl" and len(Bs) != 1:
        raise ValueError(f"{kind} is defined for a single noise matrix, got {len(Bs)}")
    if kind in ("em_dsl", "platen_dsl"):
        E = expm(Abar)
        inner = _kk(ident + G)
        for b in Bs:
            inner = inner + _kk(b)
        if kind == "platen_dsl":
            b = Bs[0]
            C = expm(-Abar) @ b @ E @ (ident + G + b) - b
            inner = inner + 0.5 * _kk(C)
        return _kk(E) @ inner
    A = Abar + G
    b = Bs[0]
    if kind == "implicit_platen_printed":
        return _kk(ident + A) + _kk(b) + _kk(b @ b)
    try:
        M = solve(ident - A, ident)
    except LinAlgFailure as exc:
        raise LinAlgFailure(f"I - Abar is singular: {exc}") from exc
    if kind == "implicit_platen_derived":
        return _kk(M) @ (_kk(ident) + _kk(b) + _kk(b @ b))
    C = b @ (A + b)
    return _kk(M) @ (_kk(ident) + _kk(b) + 0.5 * _kk(C))


@dataclass(frozen=True, eq=False)
class StabilityMatrices:
    Abar: np.ndarray
    Bbars: tuple
    S_sde: np.ndarray
    S_scheme: np.ndarray
    scheme_kind: str

    @property
    def rho(self):
        return spectral_radius(self.S_scheme)

    @property
    def Cbar(self):
        """``e^{-Abar} Bbar e^{Abar} (I + Bbar) - Bbar`` (single noise matrix)."""
        b = self.Bbars[0]
        return expm(-self.Abar) @ b @ expm(self.Abar) @ (np.eye(b.shape[0]) + b) - b


def stability_matrices(kind, A0, Bs, h):
    """Scaled matrices and both stability operators for step ``h``.

    ``S_sde`` is the continuous-time matrix for ``(A_0, B_m)``, unscaled.
    """
    A0 = _mat(A0)
    Bs = _bs(Bs, A0.shape[0])
    Abar = h * A0
    Bbars = tuple(math.sqrt(h) * b for b in Bs)
    return StabilityMatrices(
        Abar, Bbars, sde_stability_matrix(A0, Bs),
        scheme_stability_matrix(kind, Abar, list(Bbars)), kind,
    )


def _vec(P):
    return np.asarray(P).reshape(-1, order="F")


def _unvec(p, d):
    return np.asarray(p).reshape((d, d), order="F")


def exact_second_moment(S, P0, t):
    """``P(t)`` with ``vec P(t) = e^{S t} vec P0``, symmetrized."""
    P0 = _mat(P0)
    d = P0.shape[0]
    if S.shape != (d * d, d * d):
        raise ValueError(f"S has shape {S.shape}, expected {(d * d, d * d)}")
    P = _unvec(expm(S * t) @ _vec(P0), d)
    return 0.5 * (P + P.conj().T)


def scheme_moment_step(S_scheme, p):
    """``vec P_{n+1} = Sbar vec P_n``."""
    return S_scheme @ p


def iterate_moments(S_scheme, P0, steps):
    """Second-moment matrices ``P_0, ..., P_steps`` under repeated ``Sbar``."""
    P0 = _mat(P0)
    d = P0.shape[0]
    out = np.empty((steps + 1, d, d), dtype=np.result_type(P0, S_scheme))
    p = _vec(P0)
    out[0] = P0
    for n in range(steps):
        p = scheme_moment_step(S_scheme, p)
        out[n + 1] = _unvec(p, d)
    return out


def exact_step_factor(S, h):
    """Spectral radius of the exact one-step moment map ``e^{S h}``."""
    return spectral_radius(expm(S * h))


_J = np.array([[0.0, 1.0], [-1.0, 0.0]])


def orthogonal_matrices(lam_h, b_h, sigma2_h):
    """``Abar = [[lam h, b h], [0, lam h]]``, ``Bbar = sqrt(sigma^2 h) J``."""
    if sigma2_h < 0:
        raise ValueError("sigma^2 h must be nonnegative")
    return np.array([[lam_h, b_h], [0.0, lam_h]]), math.sqrt(sigma2_h) * _J


def oscillator_matrices(lam_h, omega2_h, sigma2_h):
    """``Abar = [[lam h, omega^2 h], [-omega^2 h, lam h]]``, ``Bbar = sqrt(sigma^2 h) J``."""
    if sigma2_h < 0:
        raise ValueError("sigma^2 h must be nonnegative")
    return np.array([[lam_h, omega2_h], [-omega2_h, lam_h]]), math.sqrt(sigma2_h) * _J


def problem_matrices(problem, lam_h, sigma2_h, param):
    """Scaled matrices for ``problem`` in {"orthogonal", "oscillator"}; ``param`` is ``b h`` or ``omega^2 h``."""
    if problem == "orthogonal":
        return orthogonal_matrices(lam_h, param, sigma2_h)
    if problem == "oscillator":
        return oscillator_matrices(lam_h, param, sigma2_h)
    raise ValueError(f"unknown stability problem {problem!r}; choose orthogonal or oscillator")


def scheme_rho(kind, Abar, Bbar):
    """``rho`` of a scheme kind, or for ``kind == "exact"`` of ``e^{S}`` built from the scaled matrices."""
    if kind == "exact":
        return spectral_radius(expm(sde_stability_matrix(Abar, [Bbar])))
    return spectral_radius(scheme_stability_matrix(kind, Abar, Bbar))


@dataclass(frozen=True)
class RegionColumn:
    """Boundary in ``sigma^2 h`` for one ``lam h``.

    ``status`` is ``"ok"`` (one crossing), ``"stable"`` (no crossing, stable
    on the whole scanned range), ``"unstable"`` (unstable throughout) or
    ``"non_monotone"`` (several crossings; the first is reported).
    """

    lam_h: float
    sigma2_h: float
    status: str


def _column(kind, problem, param, lam_h, grid, tol):
    def f(s2):
        return scheme_rho(kind, *problem_matrices(problem, lam_h, s2, param)) - 1.0

    vals = np.array([f(s) for s in grid])
    stable = vals < 0
    changes = np.flatnonzero(stable[:-1] != stable[1:])
    if changes.size == 0:
        status = "stable" if stable[0] else "unstable"
        return RegionColumn(lam_h, math.nan, status)
    k = changes[0]
    lo, hi = grid[k], grid[k + 1]
    flo = vals[k]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    status = "ok" if changes.size == 1 else "non_monotone"
    return RegionColumn(lam_h, 0.5 * (lo + hi), status)


def region_scan(problem, kind, param, lam_h=None, sigma2_max=4.0, scan_points=81, tol=1e-6):
    """Stability boundary ``sigma^2 h (lam h)`` where ``rho`` crosses 1.

    Args:
        problem: ``"orthogonal"`` (``param = b h``) or ``"oscillator"``
            (``param = omega^2 h``).
        kind: a scheme kind or ``"exact"``.
        lam_h: grid of ``lam h`` values (default 600 points on ``[-3, 0]``).
        sigma2_max: upper end of the scanned ``sigma^2 h`` range.
        scan_points: sample count of the bracketing scan per column.
        tol: absolute bisection tolerance.

    Returns:
        list of :class:`RegionColumn`.
    """
    lam_h = np.linspace(-3.0, 0.0, 600) if lam_h is None else np.asarray(lam_h, dtype=float)
    if lam_h.size == 0:
        raise ValueError("empty lam h grid")
    if kind != "exact" and kind not in SCHEME_KINDS:
        raise ValueError(f"unknown scheme kind {kind!r}")
    grid = np.linspace(0.0, sigma2_max, scan_points)
    return [_column(kind, problem, param, float(l), grid, tol) for l in lam_h]
