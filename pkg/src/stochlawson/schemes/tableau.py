"""Stochastic Runge-Kutta tableaus with random-variable coefficients.

A tableau produces, for given ``h``, ``dW`` (shape ``(P, M)``) and optional
``dZ`` (shape ``(P,)``), the stage coefficients ``Z[m][i][j]`` and the weights
``z[m][i]`` for channels ``m = 0..M`` (channel 0 is time).  Entries are either
Python floats (``0.0`` marks a structural zero that the stepper skips) or
arrays of shape ``(P,)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = [
    "SrkTableau",
    "SrkCoefficients",
    "tableau_euler_maruyama",
    "tableau_platen",
    "tableau_midpoint",
    "tableau_platen_strong_15",
    "tableau_platen_weak_2",
    "is_zero",
]


def is_zero(c):
    """True only for structural zeros (Python scalars equal to 0)."""
    return isinstance(c, (int, float)) and c == 0


def _sum(values):
    total = 0.0
    for v in values:
        if not is_zero(v):
            total = total + v
    return total


@dataclass(frozen=True, eq=False)
class SrkCoefficients:
    """Concrete coefficients of one step."""

    Z: list
    z: list

    @property
    def stages(self):
        return len(self.z[0])

    @property
    def channels(self):
        return len(self.z) - 1

    def stage_offsets(self, i):
        """``(c_0^{i}, [c_1^{i}, ..., c_M^{i}])`` with ``c_m^{i} = sum_j Z[m][i][j]``."""
        c = [_sum(self.Z[m][i]) for m in range(self.channels + 1)]
        return c[0], c[1:]

    def step_offsets(self):
        """``(c_0, [c_1, ..., c_M])`` with ``c_m = sum_i z[m][i]``."""
        c = [_sum(self.z[m]) for m in range(self.channels + 1)]
        return c[0], c[1:]


@dataclass(frozen=True, eq=False)
class SrkTableau:
    """An s-stage SRK method given by its coefficient generator.

    ``channels`` is the number of noise channels the method is defined for
    (``None`` for any).  ``implicit`` tableaus may have nonzero ``Z[m][i][i]``;
    the stepper solves those stages with a modified Newton iteration.
    """

    name: str
    stages: int
    generator: Callable
    implicit: bool = False
    needs_dz: bool = False
    channels: Optional[int] = None
    strong_order: Optional[float] = None
    weak_order: Optional[float] = None
    stratonovich: bool = False

    def coeffs(self, h, dW, dZ=None):
        dW = np.asarray(dW)
        if dW.ndim == 1:
            dW = dW[None, :]
        M = dW.shape[-1]
        if self.channels is not None and M != self.channels:
            raise ValueError(f"{self.name} is defined for M = {self.channels} noise channels, got {M}")
        if self.needs_dz and dZ is None:
            raise ValueError(f"{self.name} needs the mixed increment dZ")
        if dZ is not None:
            dZ = np.atleast_1d(np.asarray(dZ))
        return self.generator(float(h), dW, dZ)


def _zeros(M, s):
    return [[[0.0] * s for _ in range(s)] for _ in range(M + 1)]


def _em(h, dW, dZ):
    M = dW.shape[1]
    Z = _zeros(M, 1)
    z = [[h]] + [[dW[:, m]] for m in range(M)]
    return SrkCoefficients(Z, z)


def _platen(h, dW, dZ):
    w = dW[:, 0]
    sh = np.sqrt(h)
    q = (w * w - h) / (2.0 * sh)
    Z = _zeros(1, 2)
    Z[0][1][0] = h
    Z[1][1][0] = sh
    z = [[h, 0.0], [w - q, q]]
    return SrkCoefficients(Z, z)


def _midpoint(h, dW, dZ):
    M = dW.shape[1]
    Z = _zeros(M, 1)
    Z[0][0][0] = 0.5 * h
    for m in range(M):
        Z[m + 1][0][0] = 0.5 * dW[:, m]
    z = [[h]] + [[dW[:, m]] for m in range(M)]
    return SrkCoefficients(Z, z)


def _platen15(h, dW, dZ):
    w = dW[:, 0]
    sh = np.sqrt(h)
    mixed = (w * h - dZ) / h  # (dW h - dZ) / h
    quad = (w * w - h) / (4.0 * sh)  # (dW^2 - h) / (4 sqrt h)
    cubic = (w * w / 3.0 - h) * w / (4.0 * h)  # (dW^2/3 - h) dW / (4 h)
    Z = _zeros(1, 5)
    for i in range(1, 5):
        Z[0][i][0] = h
    Z[1][1][0] = sh
    Z[1][2][0] = -sh
    Z[1][3][0] = sh
    Z[1][3][1] = sh
    Z[1][4][0] = sh
    Z[1][4][1] = -sh
    z0 = [0.5 * h, dZ / (2.0 * sh) + 0.25 * h, -dZ / (2.0 * sh) + 0.25 * h, 0.0, 0.0]
    z1 = [
        w - mixed,
        quad + 0.5 * mixed - cubic,
        -quad + 0.5 * mixed + cubic,
        cubic,
        -cubic,
    ]
    return SrkCoefficients(Z, [z0, z1])


def _platen_weak2(h, dW, dZ):
    w = dW[:, 0]
    sh = np.sqrt(h)
    quad = (w * w - h) / (4.0 * sh)
    Z = _zeros(1, 4)
    for i in range(1, 4):
        Z[0][i][0] = h
    Z[1][1][0] = w
    Z[1][2][0] = sh
    Z[1][3][0] = -sh
    z0 = [0.5 * h, 0.5 * h, 0.0, 0.0]
    z1 = [0.5 * w, 0.0, 0.25 * w + quad, 0.25 * w - quad]
    return SrkCoefficients(Z, [z0, z1])


def tableau_euler_maruyama():
    """Euler-Maruyama: one stage, ``Z = 0``, ``z^m = dW_m``."""
    return SrkTableau("em", 1, _em, strong_order=0.5, weak_order=1.0)


def tableau_platen():
    """Explicit derivative-free Platen scheme of strong order 1 (M = 1)."""
    return SrkTableau("platen", 2, _platen, channels=1, strong_order=1.0, weak_order=1.0)


def tableau_midpoint():
    """Stochastic implicit midpoint rule, ``Z^m = dW_m / 2``, ``z^m = dW_m``."""
    return SrkTableau(
        "midpoint", 1, _midpoint, implicit=True, strong_order=1.0, weak_order=1.0,
        stratonovich=True,
    )


def tableau_platen_strong_15():
    """Explicit order 1.5 strong Platen scheme (M = 1, needs ``dZ``).

    The weights are read off the closed-form update of the scheme so that
    ``sum_i z^1_i = dW`` holds exactly.
    """
    return SrkTableau(
        "platen15", 5, _platen15, needs_dz=True, channels=1, strong_order=1.5,
    )


def tableau_platen_weak_2():
    """Explicit order 2.0 weak Platen scheme (M = 1)."""
    return SrkTableau("platen-weak2", 4, _platen_weak2, channels=1, weak_order=2.0)
