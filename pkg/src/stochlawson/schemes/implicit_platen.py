"""Drift-implicit order 1.0 strong Platen scheme (M = 1, Itô), no Lawson factor.

    Y_{n+1} = Y_n + h a(t_{n+1}, Y_{n+1}) + b(t_n, Y_n) dW
              + (b(t_{n+1}, S) - b(t_n, Y_n)) (dW^2 - h) / (2 sqrt h)

with drift ``a = A_0 x + g_0``, diffusion ``b = A_1 x + g_1`` and the explicit
support point ``S = Y_n + a(t_n, Y_n) h + b(t_n, Y_n) sqrt h``.  The implicit
equation is a linear solve when ``g_0`` is absent and a modified Newton
iteration otherwise.
"""

from __future__ import annotations

import numpy as np

from ..linalg import LinAlgFailure, solve
from ..model import Interpretation
from .stepper import NEWTON_MAXITER, NEWTON_RTOL, NewtonError

__all__ = ["ImplicitPlatenStepper", "implicit_platen_step"]


class ImplicitPlatenStepper:
    def __init__(self, sde, h):
        if sde.M != 1:
            raise ValueError(f"implicit Platen is defined for M = 1, got M = {sde.M}")
        if sde.interpretation is not Interpretation.ITO:
            raise ValueError("implicit Platen needs an Itô SDE")
        self.sde = sde
        self.h = float(h)
        d = sde.d
        self.system = np.eye(d) - self.h * sde.A[0]
        if sde.g[0] is None:
            # validates nonsingularity once, with a condition estimate on failure
            self.system_inv = solve(self.system, np.eye(d))

    def drift(self, t, x):
        return x @ self.sde.A[0].T + self.sde.eval_g(0, t, x)

    def diffusion(self, t, x):
        return x @ self.sde.A[1].T + self.sde.eval_g(1, t, x)

    def _drift_jac(self, t, x):
        jac = self.sde.eval_jac(0, t, x)
        P, d = x.shape
        if jac is None:
            base = self.drift(t, x)
            jac = np.empty((P, d, d))
            eps = np.sqrt(np.finfo(float).eps)
            for k in range(d):
                step = eps * (1.0 + np.abs(x[:, k]))
                xp = x.copy()
                xp[:, k] += step
                jac[:, :, k] = (self.drift(t, xp) - base) / step[:, None]
            return jac
        return jac + self.sde.A[0]

    def step(self, y, t, dW, dZ=None):
        h = self.h
        sh = np.sqrt(h)
        w = np.asarray(dW)[:, 0][:, None]
        a = self.drift(t, y)
        b = self.diffusion(t, y)
        support = y + a * h + b * sh
        rhs = y + b * w + (self.diffusion(t + h, support) - b) * (w * w - h) / (2.0 * sh)
        if self.sde.g[0] is None:
            return rhs @ self.system_inv.T
        # modified Newton on F(x) = x - h a(t + h, x) - rhs, Jacobian at the predictor
        x = rhs + h * a
        jac = np.eye(self.sde.d) - h * self._drift_jac(t + h, x)
        tol = NEWTON_RTOL * (1.0 + np.max(np.abs(y), axis=-1))
        for _ in range(NEWTON_MAXITER):
            r = x - h * self.drift(t + h, x) - rhs
            err = np.max(np.abs(r), axis=-1)
            if np.all(err <= tol):
                return x
            if not np.all(np.isfinite(err)):
                break
            try:
                x = x - np.linalg.solve(jac, r[..., None])[..., 0]
            except np.linalg.LinAlgError as exc:
                raise LinAlgFailure("singular implicit Platen Jacobian") from exc
        raise NewtonError(
            f"implicit Platen step did not converge after {NEWTON_MAXITER} iterations"
        )


def implicit_platen_step(sde, y, t, h, dW):
    """One drift-implicit Platen step for a state ``(d,)`` or batch ``(P, d)``."""
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    dW = np.asarray(dW, dtype=float)
    if single:
        y = y[None, :]
        dW = np.atleast_1d(dW)[None, :]
    out = ImplicitPlatenStepper(sde, h).step(y, t, dW)
    return out[0] if single else out
