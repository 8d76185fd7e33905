"""Built-in test problems.

* :func:`nonlinear_oscillator`: the mildly stiff two-dimensional Itô test SDE
  used for the convergence experiments, a nonlinear oscillator perturbed by a
  linear attractor, ``d||X||^2 = (-2 lam + 0.04) ||X||^2 dt``.
* :func:`scalar_linear`: the scalar test equation
  ``dX = (lam + sigma) X dt + mu X dW`` and its GBM special case.
* :func:`orthogonal_noise`: ``A_0 = [[lam, b], [0, lam]]`` with skew noise
  ``B = [[0, sigma], [-sigma, 0]]`` (A_0 and B do not commute for ``b != 0``).
* :func:`damped_oscillator`: ``A_0 = [[lam, w2], [-w2, lam]]`` with the same
  skew noise.

Each constructor returns a :class:`Problem` bundling the SDE, the initial
state, the time span and, for linear problems, the drift and noise matrices
of the full linear system used by the stability tools.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import LinearMap, SemiLinearSde

__all__ = [
    "Problem",
    "J2",
    "nonlinear_oscillator",
    "scalar_linear",
    "gbm",
    "orthogonal_noise",
    "damped_oscillator",
    "make_problem",
    "PROBLEMS",
]

J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])


@dataclass(frozen=True, eq=False)
class Problem:
    name: str
    sde: SemiLinearSde
    X0: np.ndarray
    T: float = 1.0
    t0: float = 0.0
    drift_matrix: Optional[np.ndarray] = None
    noise_matrices: tuple = ()
    params: dict = None

    @property
    def linear(self):
        return self.drift_matrix is not None


class _RotationDrift:
    """``g_0(x) = U_0(x) J x`` with ``U_0(x) = (x_1 + x_2)^5 / 5``."""

    def __call__(self, t, x):
        u = (x[..., 0] + x[..., 1]) ** 5 / 5.0
        return u[..., None] * (x @ J2.T)

    def jacobian(self, t, x):
        s = x[..., 0] + x[..., 1]
        du = s**4
        jx = x @ J2.T
        u = s**5 / 5.0
        jac = u[..., None, None] * J2
        # d(u J x)/dx = J x (grad u)^T + u J, grad u = s^4 (1, 1)
        jac = jac + jx[..., :, None] * du[..., None, None] * np.ones(2)
        return jac


def nonlinear_oscillator(lam=1.0):
    """Itô test SDE ``dX = (-lam X + U_0(X) J X) dt + 0.2 J X dW``, ``X(0) = (1, 0)``."""
    drift = _RotationDrift()
    sde = SemiLinearSde(
        A=(-lam * np.eye(2), 0.2 * J2),
        g=(drift, None),
        jac=(drift.jacobian, None),
        interpretation="ito",
        name=f"nonlinear_oscillator(lam={lam:g})",
    )
    return Problem(sde.name, sde, np.array([1.0, 0.0]), 1.0, params={"lambda": lam})


def scalar_linear(lam, sigma=0.0, mu=0.0, X0=1.0, T=1.0, noise_in_exponent=True):
    """Scalar test equation ``dX = (lam + sigma) X dt + mu X dW`` (real parameters).

    ``lam`` goes into ``A_0`` and ``sigma`` into ``g_0``.  With
    ``noise_in_exponent`` the multiplicative noise is ``A_1 = mu``; otherwise it
    is the remainder ``g_1 = mu x`` and ``A_1 = 0``.
    """
    g0 = LinearMap([[sigma]]) if sigma else None
    if noise_in_exponent:
        A1, g1 = np.array([[mu]]), None
    else:
        A1, g1 = np.zeros((1, 1)), (LinearMap([[mu]]) if mu else None)
    sde = SemiLinearSde(
        A=(np.array([[lam]]), A1), g=(g0, g1), interpretation="ito",
        name=f"scalar_linear(lam={lam:g}, sigma={sigma:g}, mu={mu:g})",
    )
    return Problem(
        sde.name, sde, np.array([float(X0)]), T,
        drift_matrix=np.array([[lam + sigma]]), noise_matrices=(np.array([[mu]]),),
        params={"lambda": lam, "sigma": sigma, "mu": mu},
    )


def gbm(lam=-1.0, mu=0.5, X0=1.0, T=1.0):
    """Geometric Brownian motion ``dX = lam X dt + mu X dW``."""
    return scalar_linear(lam, 0.0, mu, X0, T)


def orthogonal_noise(lam, b, sigma, X0=(1.0, 1.0), T=1.0):
    """Linear system with ``A_0 = [[lam, b], [0, lam]]`` and noise ``sigma J``.

    ``A_0`` is the Lawson part (drift-only schemes need no commutativity);
    the noise is the remainder ``g_1 = sigma J x``.
    """
    full = np.array([[lam, b], [0.0, lam]])
    B = sigma * J2
    sde = SemiLinearSde(
        A=(full, np.zeros((2, 2))),
        g=(None, LinearMap(B) if sigma else None),
        interpretation="ito",
        name=f"orthogonal_noise(lam={lam:g}, b={b:g}, sigma={sigma:g})",
    )
    return Problem(
        sde.name, sde, np.asarray(X0, dtype=float), T, drift_matrix=full,
        noise_matrices=(B,), params={"lambda": lam, "b": b, "sigma": sigma},
    )


def damped_oscillator(lam, omega2, sigma, X0=(1.0, 1.0), T=1.0):
    """Damped or driven oscillator ``A_0 = [[lam, omega2], [-omega2, lam]]``, noise ``sigma J``.

    ``A_0`` is in the Lawson part; the noise is a remainder ``g_1 = sigma J x``.
    """
    A0 = np.array([[lam, omega2], [-omega2, lam]])
    B = sigma * J2
    sde = SemiLinearSde(
        A=(A0, np.zeros((2, 2))),
        g=(None, LinearMap(B) if sigma else None),
        interpretation="ito",
        name=f"damped_oscillator(lam={lam:g}, omega2={omega2:g}, sigma={sigma:g})",
    )
    return Problem(
        sde.name, sde, np.asarray(X0, dtype=float), T, drift_matrix=A0,
        noise_matrices=(B,), params={"lambda": lam, "omega2": omega2, "sigma": sigma},
    )


PROBLEMS = {
    "oscillator": nonlinear_oscillator,
    "scalar": scalar_linear,
    "gbm": gbm,
    "orthogonal": orthogonal_noise,
    "damped": damped_oscillator,
}


def make_problem(name, **params):
    """Build a problem by id with keyword parameters."""
    if name not in PROBLEMS:
        raise KeyError(f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}")
    return PROBLEMS[name](**params)
