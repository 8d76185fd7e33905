"""Semi-linear SDEs ``dX = sum_m (A_m X + g_m(t, X)) * dW_m`` with W_0(t) = t.

The linear parts ``A_m`` are constant matrices that must commute pairwise;
under that condition the linear flow is a single matrix exponential, which is
what the Lawson schemes integrate exactly.  The nonlinear remainders ``g_m``
are callables ``g(t, x)`` that must accept a batch of states of shape
``(..., d)`` and return an array of the same shape.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, commutator, expm

__all__ = [
    "Interpretation",
    "CommutativityError",
    "CommutativityReport",
    "SemiLinearSde",
    "IntegrationGrid",
    "LinearMap",
    "gamma_star",
    "g_tilde",
    "delta_L",
    "delta_L_stage",
    "exact_linear_solution",
    "validate_commutativity",
    "split_commuting",
    "stratonovich_from_ito",
    "ito_from_stratonovich",
]

class Interpretation(str, enum.Enum):
    ITO = "ito"
    STRATONOVICH = "stratonovich"


class CommutativityError(ValueError):
    """The linear parts of an SDE do not commute."""

    def __init__(self, report):
        self.report = report
        pairs = ", ".join(f"[A_{l}, A_{k}] = {n:.3e}" for l, k, n in report.violations)
        super().__init__(f"linear parts do not commute: {pairs}")


@dataclass(frozen=True)
class CommutativityReport:
    ok: bool
    violations: tuple = ()

    def __bool__(self):
        return self.ok


def validate_commutativity(matrices, tol=1e-12):
    """Check every pair ``(A_l, A_k)`` and report the offending ones.

    A pair is accepted when the max-norm of the commutator is at most
    ``tol * (1 + |A_l| |A_k|)``.
    """
    mats = [as_matrix(a, square=True) for a in matrices]
    violations = []
    for l in range(len(mats)):
        for k in range(l + 1, len(mats)):
            c = np.max(np.abs(commutator(mats[l], mats[k])))
            scale = 1.0 + np.max(np.abs(mats[l])) * np.max(np.abs(mats[k]))
            if c > tol * scale:
                violations.append((l, k, float(c)))
    return CommutativityReport(not violations, tuple(violations))


class LinearMap:
    """``g(t, x) = B x`` for batched ``x``; carries its own Jacobian."""

    def __init__(self, matrix):
        self.matrix = as_matrix(matrix, square=True)

    def __call__(self, t, x):
        return x @ self.matrix.T

    def __repr__(self):
        return f"LinearMap({self.matrix.tolist()!r})"


def gamma_star(interpretation):
    """1/2 for Itô integrals, 0 for Stratonovich integrals."""
    return 0.5 if Interpretation(interpretation) is Interpretation.ITO else 0.0


@dataclass(frozen=True, eq=False)
class SemiLinearSde:
    """Semi-linear SDE with commuting linear parts.

    Args:
        A: the M+1 matrices ``A_0..A_M`` (drift first).
        g: the M+1 nonlinear remainders; ``None`` stands for the zero function.
        interpretation: ``"ito"`` or ``"stratonovich"``.
        jac: optional Jacobians of ``g_m`` with respect to ``x``.  Each entry is
            ``None``, a constant matrix (affine ``g_m``) or a callable
            ``(t, x) -> (..., d, d)``.  Needed for Itô/Stratonovich conversion
            when some ``g_m`` with ``m >= 1`` is nonzero; used by Newton
            solvers when present.
        commute_tol: relative tolerance for the commutativity check.
    """

    A: tuple
    g: tuple = None
    interpretation: Interpretation = Interpretation.ITO
    jac: tuple = None
    commute_tol: float = 1e-12
    name: str = "sde"

    def __post_init__(self):
        A = tuple(as_matrix(a, square=True, name=f"A_{m}") for m, a in enumerate(self.A))
        if not A:
            raise ValueError("need at least the drift matrix A_0")
        d = A[0].shape[0]
        for m, a in enumerate(A):
            if a.shape != (d, d):
                raise ValueError(f"A_{m} has shape {a.shape}, expected {(d, d)}")
        g = tuple(self.g) if self.g is not None else (None,) * len(A)
        if len(g) != len(A):
            raise ValueError(f"got {len(g)} functions g_m for {len(A)} matrices A_m")
        for m, fn in enumerate(g):
            if fn is not None and not callable(fn):
                raise TypeError(f"g_{m} must be callable or None")
        jac = tuple(self.jac) if self.jac is not None else (None,) * len(A)
        if len(jac) != len(A):
            raise ValueError("jac must have one entry per channel")
        jac = tuple(
            as_matrix(j, square=True, name=f"jac_{m}") if isinstance(j, (np.ndarray, list)) else j
            for m, j in enumerate(jac)
        )
        report = validate_commutativity(A, self.commute_tol)
        if not report:
            raise CommutativityError(report)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "jac", jac)
        object.__setattr__(self, "interpretation", Interpretation(self.interpretation))
        for m, fn in enumerate(g):
            if fn is not None:
                probe = np.asarray(fn(0.0, np.zeros((1, d), dtype=A[0].dtype)))
                if probe.shape[-1] != d:
                    raise ValueError(f"g_{m} returns vectors of length {probe.shape[-1]}, expected {d}")

    @property
    def d(self):
        return self.A[0].shape[0]

    @property
    def M(self):
        return len(self.A) - 1

    @property
    def dtype(self):
        return np.result_type(*self.A)

    @property
    def gamma(self):
        return gamma_star(self.interpretation)

    @property
    def linear_only(self):
        """True when every ``g_m`` is the zero function."""
        return all(fn is None for fn in self.g)

    def drift_generator(self):
        """``A_0 - gamma* sum_m A_m^2``, the deterministic part of the exponent."""
        gen = self.A[0].copy()
        if self.gamma:
            for a in self.A[1:]:
                gen = gen - self.gamma * (a @ a)
        return gen

    def eval_g(self, m, t, x):
        fn = self.g[m]
        if fn is None:
            return np.zeros_like(x)
        return np.asarray(fn(t, x))

    def eval_jac(self, m, t, x):
        """Jacobian of ``g_m`` at batched ``x``; ``None`` when unavailable."""
        if self.g[m] is None:
            return np.zeros(x.shape + (self.d,), dtype=x.dtype)
        j = self.jac[m]
        if j is None and isinstance(self.g[m], LinearMap):
            j = self.g[m].matrix
        if j is None:
            return None
        if callable(j):
            return np.asarray(j(t, x))
        return np.broadcast_to(j, x.shape + (self.d,))

    def replace(self, **changes):
        kwargs = dict(
            A=self.A, g=self.g, interpretation=self.interpretation, jac=self.jac,
            commute_tol=self.commute_tol, name=self.name,
        )
        kwargs.update(changes)
        return SemiLinearSde(**kwargs)


@dataclass(frozen=True)
class IntegrationGrid:
    """Equidistant grid ``t0 < t0 + h < ... < T`` with ``N`` steps."""

    t0: float
    T: float
    N: int
    X0: np.ndarray

    def __post_init__(self):
        if not self.T > self.t0:
            raise ValueError(f"need t0 < T, got t0={self.t0}, T={self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"need N >= 1 steps, got {self.N}")
        x0 = np.atleast_1d(np.asarray(self.X0))
        if not np.issubdtype(x0.dtype, np.inexact):
            x0 = x0.astype(float)
        object.__setattr__(self, "X0", x0)
        object.__setattr__(self, "N", int(self.N))

    @property
    def h(self):
        return (self.T - self.t0) / self.N

    @property
    def times(self):
        return self.t0 + self.h * np.arange(self.N + 1)


def g_tilde(sde, m, t, x, exponent_matrices=None):
    """Remainder seen by the transformed equation.

    ``g_0 - 2 gamma* sum_m A_m g_m`` for the drift channel and ``g_m``
    otherwise.  ``exponent_matrices`` overrides the ``A_m`` (m >= 1) used in the
    correction; drift-only Lawson schemes pass zeros here.
    """
    if not 0 <= m <= sde.M:
        raise IndexError(f"channel {m} out of range 0..{sde.M}")
    x = np.asarray(x)
    val = sde.eval_g(m, t, x)
    if m > 0 or not sde.gamma:
        return val
    mats = sde.A[1:] if exponent_matrices is None else exponent_matrices
    for k, a in enumerate(mats, start=1):
        if sde.g[k] is None or not np.any(a):
            continue
        val = val - 2.0 * sde.gamma * (sde.eval_g(k, t, x) @ a.T)
    return val


def delta_L_stage(sde, c0, cm, noise_matrices=None):
    """Exponent ``(A_0 - gamma* sum A_m^2) c0 + sum_m A_m c_m``.

    ``c0`` may be a scalar or an array of shape ``(P,)``; ``cm`` has shape
    ``(M,)`` or ``(P, M)``.  The result is ``(d, d)`` or ``(P, d, d)``.
    ``noise_matrices`` overrides ``A_1..A_M`` (drift-only schemes pass zeros).
    """
    mats = sde.A[1:] if noise_matrices is None else tuple(noise_matrices)
    cm = np.asarray(cm)
    if cm.shape[-1:] != (len(mats),):
        raise ValueError(f"expected {len(mats)} noise offsets, got shape {cm.shape}")
    gen = sde.A[0].copy()
    if sde.gamma:
        for a in mats:
            gen = gen - sde.gamma * (a @ a)
    c0 = np.asarray(c0)
    out = c0[..., None, None] * gen
    for k, a in enumerate(mats):
        if np.any(a):
            out = out + cm[..., k, None, None] * a
    if cm.ndim > 1 and out.ndim == 2:
        out = np.broadcast_to(out, cm.shape[:-1] + out.shape).copy()
    return out


def delta_L(sde, h, dW, noise_matrices=None):
    """Step exponent ``(A_0 - gamma* sum A_m^2) h + sum_m A_m dW_m``."""
    return delta_L_stage(sde, h, dW, noise_matrices)


def exact_linear_solution(sde, t, X0, W, t0=0.0, W0=None):
    """Exact solution of a purely linear commuting SDE at time ``t``.

    ``W`` holds the M Wiener values at ``t`` (or ``(P, M)`` for a batch) and
    ``W0`` those at ``t0`` (zeros by default).
    """
    if not sde.linear_only:
        raise ValueError("exact_linear_solution needs g_m = 0 for every channel")
    W = np.asarray(W, dtype=float)
    W0 = np.zeros_like(W) if W0 is None else np.asarray(W0, dtype=float)
    expo = delta_L_stage(sde, t - t0, W - W0)
    X0 = np.asarray(X0)
    return np.einsum("...ij,...j->...i", expm(expo), X0)


def split_commuting(A0_full, A1):
    """Split ``A0_full = A0 + residual`` with ``A0 = c A1`` commuting with ``A1``.

    ``c`` is the Frobenius projection coefficient ``<A0_full, A1> / <A1, A1>``
    (zero when ``A1 = 0``), which makes the residual as small as possible.
    """
    a0 = as_matrix(A0_full, square=True, name="A0_full")
    a1 = as_matrix(A1, square=True, name="A1")
    if a0.shape != a1.shape:
        raise ValueError(f"dimension mismatch: {a0.shape} vs {a1.shape}")
    denom = np.vdot(a1, a1).real
    c = np.vdot(a1, a0) / denom if denom > 0 else 0.0
    if np.isrealobj(a0) and np.isrealobj(a1):
        c = float(np.real(c))
    part = c * a1
    return part, a0 - part


class _ConvertedDrift:
    """``g_0 + sign/2 * sum_m (A_m g_m + Dg_m (A_m x + g_m))`` for interpretation changes.

    The purely linear part ``sign/2 * sum_m A_m^2 x`` of the correction is
    moved into ``A_0`` instead, so it stays inside the exponent.
    """

    def __init__(self, sde, sign):
        self.sde = sde
        self.sign = sign

    def correction(self, t, x):
        sde = self.sde
        x = np.asarray(x)
        total = np.zeros(np.shape(x), dtype=np.result_type(x, sde.dtype))
        for m in range(1, sde.M + 1):
            if sde.g[m] is None:
                continue
            a = sde.A[m]
            gm = sde.eval_g(m, t, x)
            jac = sde.eval_jac(m, t, x)
            if jac is None:
                raise ValueError(f"g_{m} needs a Jacobian for the interpretation change")
            total = total + gm @ a.T + np.einsum("...ij,...j->...i", jac, x @ a.T + gm)
        return 0.5 * total

    def __call__(self, t, x):
        return self.sde.eval_g(0, t, x) + self.sign * self.correction(t, x)


def _convert(sde, target, sign):
    for m in range(1, sde.M + 1):
        if sde.g[m] is not None and sde.eval_jac(m, 0.0, np.zeros((1, sde.d))) is None:
            raise ValueError(
                f"g_{m} is nonzero but has no Jacobian; supply jac[{m}] "
                "(a constant matrix for affine g_m, or a callable)"
            )
    a0 = sde.A[0].copy()
    for a in sde.A[1:]:
        a0 = a0 + 0.5 * sign * (a @ a)
    g, jac = sde.g, sde.jac
    if any(fn is not None for fn in sde.g[1:]):
        g = (_ConvertedDrift(sde, sign),) + tuple(sde.g[1:])
        jac = (None,) + tuple(sde.jac[1:])
    return sde.replace(
        A=(a0,) + tuple(sde.A[1:]), g=g, jac=jac, interpretation=target,
        name=f"{sde.name}[{target.value}]",
    )


def stratonovich_from_ito(sde):
    """Equivalent Stratonovich SDE (drift reduced by the Itô correction)."""
    if sde.interpretation is Interpretation.STRATONOVICH:
        return sde
    return _convert(sde, Interpretation.STRATONOVICH, -1.0)


def ito_from_stratonovich(sde):
    """Equivalent Itô SDE (drift increased by the Itô correction)."""
    if sde.interpretation is Interpretation.ITO:
        return sde
    return _convert(sde, Interpretation.ITO, +1.0)
