"""Generic SRK Lawson stepper, the local and global integration loops.

One step of the local scheme reads

    H_i     = Y_n + sum_j sum_m Z^m_ij  e^{-dL_j} gt_m(t_n + c_0^j, e^{dL_j} H_j)
    V       = Y_n + sum_i sum_m z^m_i   e^{-dL_i} gt_m(t_n + c_0^i, e^{dL_i} H_i)
    Y_{n+1} = e^{dL} V

where ``gt`` is the corrected remainder (:func:`~stochlawson.model.g_tilde`)
and ``dL_i`` the stage exponents built from the stage offsets ``c_m^i``.
With all exponents zero this is the plain SRK method.  The global variant
integrates a single transformed equation from ``t0`` and maps back with the
accumulated exponent; it exists to cross-check the local loop.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..linalg import expm, expm_pair
from ..model import LinearMap, SemiLinearSde, g_tilde
from .tableau import is_zero

__all__ = [
    "LawsonMode",
    "NewtonError",
    "DivergenceError",
    "Trajectory",
    "lawson_form",
    "LawsonStepper",
    "srk_lawson_step",
    "BLOWUP_NORM",
]

BLOWUP_NORM = 1e12
NEWTON_MAXITER = 50
NEWTON_RTOL = 1e-12


class LawsonMode(str, enum.Enum):
    RAW = "raw"
    DSL = "dsl"
    FSL = "fsl"


class NewtonError(ArithmeticError):
    """Implicit stage equation did not converge."""


class DivergenceError(ArithmeticError):
    """State norm exceeded the blow-up threshold."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"integration diverged at step {step}")


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray


class _AffineRemainder:
    """``x -> A x + g(t, x)``, used to move a linear part out of the exponent."""

    def __init__(self, matrix, fn):
        self.matrix = matrix
        self.fn = fn

    def __call__(self, t, x):
        out = x @ self.matrix.T
        if self.fn is not None:
            out = out + self.fn(t, x)
        return out


def _absorb(a, fn, jac):
    if not np.any(a):
        return fn, jac
    if fn is None:
        return LinearMap(a), a
    if jac is None:
        new_jac = None
    elif callable(jac):
        new_jac = lambda t, x, j=jac, a=a: j(t, x) + a  # noqa: E731
    else:
        new_jac = jac + a
    return _AffineRemainder(a, fn), new_jac


def lawson_form(sde, mode):
    """SDE whose ``A_m`` are exactly the matrices kept in the exponent.

    ``raw`` moves every linear part into the remainders, ``dsl`` keeps only
    ``A_0`` in the exponent and ``fsl`` keeps all of them.
    """
    mode = LawsonMode(mode)
    if mode is LawsonMode.FSL:
        return sde
    keep = 0 if mode is LawsonMode.DSL else -1
    A, g, jac = [], [], []
    for m in range(sde.M + 1):
        if m <= keep:
            A.append(sde.A[m])
            g.append(sde.g[m])
            jac.append(sde.jac[m])
        else:
            fn, j = _absorb(sde.A[m], sde.g[m], sde.jac[m])
            A.append(np.zeros_like(sde.A[m]))
            g.append(fn)
            jac.append(j)
    return sde.replace(A=tuple(A), g=tuple(g), jac=tuple(jac))


def _apply(mat, x):
    if mat is None:
        return x
    if mat.ndim == 2:
        return x @ mat.T
    return np.einsum("pij,pj->pi", mat, x)


def _scale(c, x):
    if np.ndim(c) == 0:
        return c * x
    return c[:, None] * x


class LawsonStepper:
    """Step map of one SRK Lawson scheme for a fixed SDE and step size.

    ``sde`` must already be in Lawson form (see :func:`lawson_form`): every
    nonzero ``A_m`` is put in the exponent.  Exponentials whose argument does
    not depend on the noise are computed once and cached.
    """

    def __init__(self, sde, tableau, h):
        self.sde = sde
        self.tableau = tableau
        self.h = float(h)
        self.gen = sde.drift_generator()
        self.noise_mats = tuple(sde.A[1:])
        self.noise_active = [k for k, a in enumerate(self.noise_mats) if np.any(a)]
        self.trivial = not np.any(self.gen) and not self.noise_active
        self._cache = {}
        self._plan = None
        # channels whose remainder is identically zero contribute nothing
        no_g = all(g is None for g in sde.g[1:])
        self._silent = {m for m in range(sde.M + 1) if sde.g[m] is None and (m > 0 or not sde.gamma or no_g)}
        self._jac_ok = all(
            sde.g[m] is None or sde.eval_jac(m, 0.0, np.zeros((1, sde.d), dtype=sde.dtype)) is not None
            for m in range(sde.M + 1)
        )

    # exponentials -------------------------------------------------------
    def exponent(self, c0, cm):
        """Stage exponent ``gen * c0 + sum_m A_m c_m`` (``None`` if identically zero)."""
        if self.trivial:
            return None
        out = self.gen * c0 if np.ndim(c0) == 0 else np.asarray(c0)[:, None, None] * self.gen
        for k in self.noise_active:
            c = cm[k]
            if is_zero(c):
                continue
            term = c * self.noise_mats[k] if np.ndim(c) == 0 else np.asarray(c)[:, None, None] * self.noise_mats[k]
            out = out + term
        return out

    def _deterministic(self, c0, cm):
        return np.ndim(c0) == 0 and all(is_zero(cm[k]) or np.ndim(cm[k]) == 0 for k in self.noise_active)

    def exp_pair(self, c0, cm):
        """``(e^{dL}, e^{-dL})`` for the given offsets; cached when deterministic."""
        if self.trivial:
            return None, None
        if self._deterministic(c0, cm):
            key = (float(c0),) + tuple(float(cm[k]) for k in self.noise_active)
            if key not in self._cache:
                expo = self.exponent(c0, cm)
                if not np.any(expo):
                    self._cache[key] = (None, None)
                else:
                    self._cache[key] = expm_pair(expo)
            return self._cache[key]
        return expm_pair(self.exponent(c0, cm))

    # stage machinery ----------------------------------------------------
    def _k(self, m, t, x_pos, neg):
        return _apply(neg, g_tilde(self.sde, m, t, x_pos))

    def stage_map(self, t, c0, pos, neg, m_list):
        """Return ``{m: e^{-L} gt_m(t + c0, e^{L} H)}`` as a function of ``H``."""

        def f(H):
            x = _apply(pos, H)
            return {m: self._k(m, t + c0, x, neg) for m in m_list}

        return f

    def _stage_plan(self, coeffs):
        """Nonzero pattern of the tableau; structural zeros do not depend on the noise."""
        if self._plan is None:
            s, M = coeffs.stages, coeffs.channels
            Z, z = coeffs.Z, coeffs.z
            plan = []
            for i in range(s):
                live = [m for m in range(M + 1) if m not in self._silent]
                terms = [(j, m) for j in range(i) for m in live if not is_zero(Z[m][i][j])]
                needed = [
                    m for m in live
                    if not is_zero(z[m][i]) or any(not is_zero(Z[m][k][i]) for k in range(i, s))
                ]
                diag = [m for m in live if not is_zero(Z[m][i][i])]
                plan.append((terms, needed, diag))
            weights = [(i, m) for i in range(s) for m in range(M + 1) if m not in self._silent and not is_zero(z[m][i])]
            self._plan = (plan, weights)
        return self._plan

    def run_stages(self, base, t, coeffs, exps, scale_ref):
        """Evaluate the stages and return ``base + sum_i sum_m z^m_i K^m_i``.

        ``exps[i]`` holds the ``(e^{L_i}, e^{-L_i})`` pair used at stage ``i``.
        """
        Z, z = coeffs.Z, coeffs.z
        plan, weights = self._stage_plan(coeffs)
        K = []
        for i, (terms, needed, diag) in enumerate(plan):
            acc = base
            for j, m in terms:
                acc = acc + _scale(Z[m][i][j], K[j][m])
            c0, _ = coeffs.stage_offsets(i)
            pos, neg = exps[i]
            fmap = self.stage_map(t, c0, pos, neg, needed)
            if not needed:
                K.append({})
                continue
            if diag:
                H = self._solve_stage(acc, fmap, Z, i, diag, t, c0, pos, neg, scale_ref)
            else:
                H = acc
            K.append(fmap(H) if needed else {})
        out = base
        for i, m in weights:
            out = out + _scale(z[m][i], K[i][m])
        return out

    def _residual(self, H, acc, fmap, Z, i, diag):
        k = fmap(H)
        r = H - acc
        for m in diag:
            r = r - _scale(Z[m][i][i], k[m])
        return r

    def _stage_jacobian(self, H, acc, fmap, Z, i, diag, t, c0, pos, neg):
        """Jacobian of the stage residual at ``H`` (analytic when available)."""
        P, d = H.shape
        if self._jac_ok:
            x = _apply(pos, H)
            jac = np.broadcast_to(np.eye(d, dtype=H.dtype), (P, d, d)).copy()
            for m in diag:
                jm = self._gtilde_jac(m, t + c0, x)
                if pos is not None:
                    if pos.ndim == 2:
                        jm = neg @ jm @ pos
                    else:
                        jm = np.einsum("pij,pjk,pkl->pil", neg, jm, pos)
                c = Z[m][i][i]
                jac = jac - (c * jm if np.ndim(c) == 0 else c[:, None, None] * jm)
            return jac
        base = self._residual(H, acc, fmap, Z, i, diag)
        jac = np.empty((P, d, d), dtype=np.result_type(H, base))
        eps = np.sqrt(np.finfo(float).eps)
        for k in range(d):
            step = eps * (1.0 + np.abs(H[:, k]))
            Hp = H.copy()
            Hp[:, k] = Hp[:, k] + step
            jac[:, :, k] = (self._residual(Hp, acc, fmap, Z, i, diag) - base) / step[:, None]
        return jac

    def _gtilde_jac(self, m, t, x):
        sde = self.sde
        jm = sde.eval_jac(m, t, x)
        if m == 0 and sde.gamma:
            for k, a in enumerate(self.noise_mats, start=1):
                if sde.g[k] is None or not np.any(a):
                    continue
                jm = jm - 2.0 * sde.gamma * np.einsum("ij,pjk->pik", a, sde.eval_jac(k, t, x))
        return jm

    def _solve_stage(self, acc, fmap, Z, i, diag, t, c0, pos, neg, scale_ref):
        H = acc
        r = self._residual(H, acc, fmap, Z, i, diag)
        tol = NEWTON_RTOL * (1.0 + np.max(np.abs(scale_ref), axis=-1))
        if np.all(np.max(np.abs(r), axis=-1) <= tol):
            return H
        jac = self._stage_jacobian(H, acc, fmap, Z, i, diag, t, c0, pos, neg)
        for _ in range(NEWTON_MAXITER):
            H = H - np.linalg.solve(jac, r[..., None])[..., 0]
            r = self._residual(H, acc, fmap, Z, i, diag)
            err = np.max(np.abs(r), axis=-1)
            if np.all(err <= tol):
                return H
            if not np.all(np.isfinite(err)):
                break
        raise NewtonError(
            f"stage {i} did not converge: residual {np.nanmax(err):.3e} > tolerance "
            f"after {NEWTON_MAXITER} iterations"
        )

    # public step --------------------------------------------------------
    def coefficients(self, dW, dZ=None):
        return self.tableau.coeffs(self.h, dW, dZ)

    def stage_exponentials(self, coeffs, extra=None):
        """Stage pairs ``(e^{L_i}, e^{-L_i})``; noise-dependent ones go through one stacked call.

        ``extra`` is an optional further exponent evaluated in the same call;
        its pair is returned as a second value.
        """
        out = [(None, None)] * coeffs.stages
        plan, _ = self._stage_plan(coeffs)
        pending, expos = [], []
        for i in range(coeffs.stages):
            if not plan[i][1]:
                continue  # stage value never used
            c0, cm = coeffs.stage_offsets(i)
            if self.trivial or self._deterministic(c0, cm):
                out[i] = self.exp_pair(c0, cm)
            else:
                pending.append(i)
                expos.append(self.exponent(c0, cm))
        if extra is not None:
            expos.append(extra)
        if not expos:
            return out, None
        if not pending:
            # only the step exponential; its inverse is never used
            return out, (expm(extra), None)
        shape = np.broadcast_shapes(*(e.shape for e in expos))
        pos, neg = expm_pair(np.stack([np.broadcast_to(e, shape) for e in expos]))
        for j, i in enumerate(pending):
            out[i] = (pos[j], neg[j])
        return out, ((pos[-1], neg[-1]) if extra is not None else None)

    def step_exponent(self, dW):
        """``dL = gen h + sum_m A_m dW_m`` (``None`` when zero)."""
        dW = np.asarray(dW)
        return self.exponent(self.h, [dW[:, k] for k in range(dW.shape[1])])

    def step(self, y, t, dW, dZ=None):
        """Advance a batch of states ``y`` (shape ``(P, d)``) by one step."""
        dW = np.asarray(dW)
        if dW.ndim == 1:
            dW = dW[None, :]
        coeffs = self.coefficients(dW, dZ)
        cm = [dW[:, k] for k in range(dW.shape[1])]
        extra = self.exponent(self.h, cm) if self.noise_active else None
        exps, step_pair = self.stage_exponentials(coeffs, extra)
        V = self.run_stages(y, t, coeffs, exps, y)
        full = step_pair[0] if step_pair is not None else self.exp_pair(self.h, cm)[0]
        return _apply(full, V)


def _as_batch(y, dW, dZ):
    y = np.asarray(y)
    single = y.ndim == 1
    if single:
        y = y[None, :]
        dW = np.atleast_1d(np.asarray(dW, dtype=float))[None, :]
        if dZ is not None:
            dZ = np.atleast_1d(np.asarray(dZ, dtype=float))
    if not np.issubdtype(y.dtype, np.inexact):
        y = y.astype(float)
    return y, np.asarray(dW), dZ, single


def srk_lawson_step(sde, tableau, mode, y, t, h, dW, dZ=None):
    """One step of the SRK Lawson scheme ``(tableau, mode)``.

    ``y`` is a state vector ``(d,)`` or a batch ``(P, d)``; ``dW`` matches with
    shape ``(M,)`` or ``(P, M)``.
    """
    if not isinstance(sde, SemiLinearSde):
        raise TypeError("sde must be a SemiLinearSde")
    y, dW, dZ, single = _as_batch(y, dW, dZ)
    if dW.shape[-1] != sde.M:
        raise ValueError(f"expected {sde.M} increments per step, got {dW.shape[-1]}")
    stepper = LawsonStepper(lawson_form(sde, mode), tableau, h)
    out = stepper.step(y, t, dW, dZ)
    if not np.all(np.isfinite(out)):
        raise DivergenceError(0, "non-finite state after one step")
    return out[0] if single else out
