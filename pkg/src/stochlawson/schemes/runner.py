"""Integration loops: single trajectories, path batches and the global oracle."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..linalg import expm
from .registry import Scheme, get_scheme
from .stepper import BLOWUP_NORM, DivergenceError, LawsonStepper, NewtonError, Trajectory

__all__ = ["integrate", "integrate_global", "run_paths", "PathRun", "PathIntegrator"]


def _scheme(scheme):
    return scheme if isinstance(scheme, Scheme) else get_scheme(scheme)


def _check_noise(sde, scheme, grid, noise):
    if noise.N != grid.N:
        raise ValueError(f"noise has {noise.N} steps, grid has {grid.N}")
    if not np.isclose(noise.h, grid.h, rtol=1e-12, atol=0.0):
        raise ValueError(f"noise step {noise.h} does not match grid step {grid.h}")
    if noise.M != sde.M:
        raise ValueError(f"noise has {noise.M} channels, SDE has {sde.M}")
    if scheme.needs_dz and noise.dZ is None:
        raise ValueError(f"{scheme.name} needs dZ; sample the grid with need_dz=True")
    if grid.X0.shape != (sde.d,):
        raise ValueError(f"X0 has shape {grid.X0.shape}, expected {(sde.d,)}")


def _step(stepper, y, t, dW, dZ, n):
    try:
        return stepper.step(y, t, dW, dZ)
    except NewtonError as exc:
        err = NewtonError(f"step {n}: {exc}")
        err.step = n
        raise err from exc


def integrate(sde, scheme, grid, noise):
    """Run ``scheme`` on one noise path.

    Args:
        sde: the problem.
        scheme: a :class:`Scheme` or its name.
        grid: :class:`~stochlawson.model.IntegrationGrid`.
        noise: :class:`~stochlawson.noise.NoiseGrid` with the same ``N`` and ``h``.

    Raises:
        DivergenceError: a state norm exceeded ``BLOWUP_NORM`` or became
            non-finite; ``.step`` is the offending step.
    """
    scheme = _scheme(scheme)
    _check_noise(sde, scheme, grid, noise)
    stepper = scheme.make_stepper(sde, grid.h)
    times = grid.times
    states = np.empty((grid.N + 1, sde.d), dtype=np.result_type(grid.X0, sde.dtype))
    y = grid.X0[None, :].astype(states.dtype)
    states[0] = y[0]
    for n in range(grid.N):
        dZ = None if noise.dZ is None else noise.dZ[n : n + 1]
        y = _step(stepper, y, times[n], noise.dW[n][None, :], dZ, n)
        norm = np.linalg.norm(y[0])
        if not np.isfinite(norm) or norm > BLOWUP_NORM:
            raise DivergenceError(n + 1)
        states[n + 1] = y[0]
    return Trajectory(times, states)


def integrate_global(sde, scheme, grid, noise):
    """Global Lawson scheme: one transformed equation from ``t0``.

    The stage exponentials are ``e^{Lbar_n + dL_i}`` with ``Lbar_n`` the
    accumulated step exponent, and ``Y_n = e^{Lbar_n} V_n``.  Mathematically
    identical to :func:`integrate`; only meant as an independent check.
    """
    scheme = _scheme(scheme)
    if scheme.tableau is None:
        raise ValueError("the global form needs an SRK tableau scheme")
    _check_noise(sde, scheme, grid, noise)
    stepper = scheme.make_stepper(sde, grid.h)
    if not isinstance(stepper, LawsonStepper):
        raise TypeError("unexpected stepper type")
    d = sde.d
    times = grid.times
    states = np.empty((grid.N + 1, d), dtype=np.result_type(grid.X0, sde.dtype))
    states[0] = grid.X0
    v = grid.X0[None, :].astype(states.dtype)
    lbar = np.zeros((d, d))
    for n in range(grid.N):
        dW = noise.dW[n][None, :]
        dZ = None if noise.dZ is None else noise.dZ[n : n + 1]
        coeffs = stepper.coefficients(dW, dZ)
        exps = []
        for i in range(coeffs.stages):
            local = stepper.exponent(*coeffs.stage_offsets(i))
            expo = lbar if local is None else lbar + local
            expo = np.broadcast_to(expo, (1, d, d))
            exps.append((expm(expo), expm(-expo)))
        try:
            v = stepper.run_stages(v, times[n], coeffs, exps, states[n][None, :])
        except NewtonError as exc:
            err = NewtonError(f"step {n}: {exc}")
            err.step = n
            raise err from exc
        step_expo = stepper.step_exponent(dW)
        if step_expo is not None:
            lbar = lbar + step_expo.reshape(-1, d, d)[0]
        y = v @ expm(lbar).T
        norm = np.linalg.norm(y[0])
        if not np.isfinite(norm) or norm > BLOWUP_NORM:
            raise DivergenceError(n + 1)
        states[n + 1] = y[0]
    return Trajectory(times, states)


@dataclass(eq=False)
class PathRun:
    """Outcome of a batch run.

    ``final`` holds the end states (rows of diverged paths are NaN),
    ``diverged`` flags paths whose norm exceeded the blow-up threshold and
    ``records`` maps requested step indices to the ``(P, d)`` states.
    """

    final: np.ndarray
    diverged: np.ndarray
    records: dict = field(default_factory=dict)


class PathIntegrator:
    """Incremental batch integration, fed one chunk of increments at a time.

    Diverged paths are frozen at zero internally, flagged, and reported as
    NaN so one unstable path never aborts the batch.
    """

    def __init__(self, sde, scheme, h, t0, X0, P):
        self.scheme = _scheme(scheme)
        self.sde = sde
        self.h = float(h)
        self.stepper = self.scheme.make_stepper(sde, h)
        X0 = np.asarray(X0, dtype=float)
        self.y = np.broadcast_to(X0, (P, sde.d)).astype(np.result_type(X0, sde.dtype))
        self.t0 = float(t0)
        self.n = 0
        self.diverged = np.zeros(P, dtype=bool)
        self.elapsed = 0.0

    def state(self):
        out = self.y.copy()
        out[self.diverged] = np.nan
        return out

    def advance(self, noise, record_steps=(), records=None):
        """Take ``noise.N`` steps; states at global step indices in ``record_steps`` go into ``records``."""
        if noise.M != self.sde.M:
            raise ValueError(f"noise has {noise.M} channels, SDE has {self.sde.M}")
        if not np.isclose(noise.h, self.h, rtol=1e-12, atol=0.0):
            raise ValueError(f"noise step {noise.h} does not match integrator step {self.h}")
        if self.scheme.needs_dz and noise.dZ is None:
            raise ValueError(f"{self.scheme.name} needs dZ")
        start = time.perf_counter()
        y = self.y
        for k in range(noise.N):
            dZ = None if noise.dZ is None else noise.dZ[:, k]
            t = self.t0 + self.n * self.h
            with np.errstate(over="ignore", invalid="ignore"):
                y = _step(self.stepper, y, t, noise.dW[:, k, :], dZ, self.n)
                norm = np.linalg.norm(y, axis=-1)
            bad = ~np.isfinite(norm) | (norm > BLOWUP_NORM)
            if np.any(bad):
                self.diverged |= bad
                y[bad] = 0.0
            self.n += 1
            if records is not None and self.n in record_steps:
                self.y = y
                records[self.n] = self.state()
        self.y = y
        self.elapsed += time.perf_counter() - start
        return self


def run_paths(sde, scheme, t0, X0, noise, record_steps=()):
    """Integrate all paths of a :class:`~stochlawson.noise.PathNoise` together."""
    integ = PathIntegrator(sde, scheme, noise.h, t0, X0, noise.P)
    wanted = set(int(s) for s in record_steps)
    records = {0: integ.state()} if 0 in wanted else {}
    integ.advance(noise, wanted, records)
    return PathRun(integ.state(), integ.diverged.copy(), records)
