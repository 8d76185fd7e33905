"""Straight-line SL updates, written out term by term.

These duplicate what the generic tableau stepper computes and serve as fast
paths and as a cross-check of the tableau coefficients.  All functions take
batched states ``y`` of shape ``(P, d)`` and increments ``dW`` of shape
``(P, M)``; ``mode`` selects which linear parts go into the exponent.
"""

from __future__ import annotations

import numpy as np

from ..linalg import expm
from ..model import delta_L_stage, g_tilde
from .stepper import lawson_form

__all__ = [
    "em_sl_step",
    "platen_sl_step",
    "platen15_sl_step",
    "platen_weak2_sl_step",
    "midpoint_residual",
]


def _mv(mat, x):
    if mat.ndim == 2:
        return x @ mat.T
    return np.einsum("pij,pj->pi", mat, x)


class _Conj:
    """``x -> e^{-L} gt_m(t, e^{L} x)`` for one stage exponent ``L``."""

    def __init__(self, sde, c0, c1):
        self.sde = sde
        expo = delta_L_stage(sde, c0, c1)
        self.pos = expm(expo)
        self.neg = expm(-expo)

    def __call__(self, m, t, x):
        return _mv(self.neg, g_tilde(self.sde, m, t, _mv(self.pos, x)))


def em_sl_step(sde, mode, y, t, h, dW):
    """``Y_{n+1} = e^{dL} (Y_n + sum_m gt_m(t_n, Y_n) dW_m)`` with ``dW_0 = h``."""
    sde = lawson_form(sde, mode)
    dW = np.asarray(dW, dtype=float)
    v = y + h * g_tilde(sde, 0, t, y)
    for m in range(1, sde.M + 1):
        v = v + dW[:, m - 1, None] * g_tilde(sde, m, t, y)
    return _mv(expm(delta_L_stage(sde, h, dW)), v)


def platen_sl_step(sde, mode, y, t, h, dW):
    """Platen SL update with the stage-2 conjugation written out explicitly."""
    sde = lawson_form(sde, mode)
    dW = np.asarray(dW, dtype=float)
    w = dW[:, 0]
    sh = np.sqrt(h)
    g0 = g_tilde(sde, 0, t, y)
    g1 = g_tilde(sde, 1, t, y)
    H2 = y + g0 * h + g1 * sh
    stage2 = _Conj(sde, h, np.array([sh]))
    bracket = stage2(1, t + h, H2) - g1
    v = y + g0 * h + g1 * w[:, None] + ((w * w - h) / (2.0 * sh))[:, None] * bracket
    return _mv(expm(delta_L_stage(sde, h, dW)), v)


def platen15_sl_step(sde, mode, y, t, h, dW, dZ):
    """Order 1.5 strong Platen SL update (M = 1), term by term."""
    sde = lawson_form(sde, mode)
    dW = np.asarray(dW, dtype=float)
    w = dW[:, 0][:, None]
    dz = np.asarray(dZ, dtype=float)[:, None]
    sh = np.sqrt(h)
    a1 = g_tilde(sde, 0, t, y)
    b1 = g_tilde(sde, 1, t, y)
    s2 = _Conj(sde, h, np.array([sh]))
    s3 = _Conj(sde, h, np.array([-sh]))
    s4 = _Conj(sde, h, np.array([2.0 * sh]))
    s5 = _Conj(sde, h, np.array([0.0]))
    H2 = y + a1 * h + b1 * sh
    H3 = y + a1 * h - b1 * sh
    b2 = s2(1, t + h, H2)
    b3 = s3(1, t + h, H3)
    a2 = s2(0, t + h, H2)
    a3 = s3(0, t + h, H3)
    H4 = y + a1 * h + b1 * sh + b2 * sh
    H5 = y + a1 * h + b1 * sh - b2 * sh
    b4 = s4(1, t + h, H4)
    b5 = s5(1, t + h, H5)
    v = (
        y
        + b1 * w
        + (a2 - a3) * dz / (2.0 * sh)
        + 0.25 * (a2 + 2.0 * a1 + a3) * h
        + 0.25 * (b2 - b3) * (w * w - h) / sh
        + 0.5 * (b2 - 2.0 * b1 + b3) * (w * h - dz) / h
        + 0.25 * (b4 - b5 - b2 + b3) * (w * w / 3.0 - h) * w / h
    )
    return _mv(expm(delta_L_stage(sde, h, dW)), v)


def platen_weak2_sl_step(sde, mode, y, t, h, dW):
    """Order 2.0 weak Platen SL update (M = 1), term by term."""
    sde = lawson_form(sde, mode)
    dW = np.asarray(dW, dtype=float)
    w = dW[:, 0]
    wc = w[:, None]
    sh = np.sqrt(h)
    a1 = g_tilde(sde, 0, t, y)
    b1 = g_tilde(sde, 1, t, y)
    s2 = _Conj(sde, h, dW)
    s3 = _Conj(sde, h, np.array([sh]))
    s4 = _Conj(sde, h, np.array([-sh]))
    H2 = y + a1 * h + b1 * wc
    H3 = y + a1 * h + b1 * sh
    H4 = y + a1 * h - b1 * sh
    b3 = s3(1, t + h, H3)
    b4 = s4(1, t + h, H4)
    v = (
        y
        + 0.5 * (s2(0, t + h, H2) + a1) * h
        + 0.25 * (b3 + 2.0 * b1 + b4) * wc
        + 0.25 * (b3 - b4) * ((w * w - h) / sh)[:, None]
    )
    return _mv(expm(delta_L_stage(sde, h, dW)), v)


def midpoint_residual(sde, mode, y, y_next, t, h, dW):
    """Residual of the rewritten midpoint SL fixed-point equation.

    ``Y_{n+1} - e^{dL} Y_n - sum_m e^{dL/2} gt_m(t_n + h/2, (e^{dL/2} Y_n + e^{-dL/2} Y_{n+1}) / 2) dW_m``
    """
    sde = lawson_form(sde, mode)
    dW = np.asarray(dW, dtype=float)
    expo = delta_L_stage(sde, h, dW)
    full = expm(expo)
    half = expm(0.5 * expo)
    half_inv = expm(-0.5 * expo)
    x = 0.5 * (_mv(half, y) + _mv(half_inv, y_next))
    tm = t + 0.5 * h
    acc = h * g_tilde(sde, 0, tm, x)
    for m in range(1, sde.M + 1):
        acc = acc + dW[:, m - 1, None] * g_tilde(sde, m, tm, x)
    return y_next - _mv(full, y) - _mv(half, acc)
