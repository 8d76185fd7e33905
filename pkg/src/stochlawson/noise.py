"""Reproducible Wiener increments and their coarsening.

Every path owns two independent Philox streams keyed by
``(seed, path_index, stream)``: stream 0 feeds the increments ``dW`` in
step-major, channel-minor order, stream 1 feeds the auxiliary normals used to
build ``dZ``.  A path therefore has the same increments no matter which
worker generates it, how many other paths are generated alongside it, and
whether ``dZ`` is requested.

``dZ`` approximates the mixed integral ``int_{t_n}^{t_{n+1}} (W(s) - W(t_n)) ds``
and is drawn jointly Gaussian with ``dW``:
``dZ = h/2 (dW + zeta / sqrt(3))`` with ``zeta ~ N(0, h)`` independent, which
gives ``Var dZ = h^3/3`` and ``Cov(dW, dZ) = h^2/2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "NoiseGrid",
    "PathNoise",
    "path_generator",
    "sample_grid",
    "sample_paths",
    "PathStream",
    "coarsen",
    "coarsen_increments",
    "total_increment",
]


def path_generator(seed, path_index, stream=0):
    """Generator for one ``(seed, path_index, stream)`` key."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, path_index, stream])))


@dataclass(frozen=True, eq=False)
class NoiseGrid:
    """Increments of one Brownian path on an equidistant grid."""

    M: int
    N: int
    h: float
    dW: np.ndarray
    dZ: Optional[np.ndarray] = None
    seed: int = 0
    path_index: int = 0

    def __post_init__(self):
        if self.dW.shape != (self.N, self.M):
            raise ValueError(f"dW has shape {self.dW.shape}, expected {(self.N, self.M)}")
        if self.dZ is not None and self.dZ.shape != (self.N,):
            raise ValueError(f"dZ has shape {self.dZ.shape}, expected {(self.N,)}")

    @property
    def W(self):
        """Wiener values at the grid points, starting from 0 (shape ``(N+1, M)``)."""
        return np.vstack([np.zeros((1, self.M)), np.cumsum(self.dW, axis=0)])


@dataclass(frozen=True, eq=False)
class PathNoise:
    """Increments for a batch of paths: ``dW`` is ``(P, N, M)``, ``dZ`` is ``(P, N)``."""

    h: float
    dW: np.ndarray
    dZ: Optional[np.ndarray] = None

    @property
    def P(self):
        return self.dW.shape[0]

    @property
    def N(self):
        return self.dW.shape[1]

    @property
    def M(self):
        return self.dW.shape[2]

    def coarsen(self, factor):
        dW, dZ, h = coarsen_increments(self.dW, self.dZ, self.h, factor, axis=1)
        return PathNoise(h, dW, dZ)

    def path(self, p):
        return NoiseGrid(self.M, self.N, self.h, self.dW[p], None if self.dZ is None else self.dZ[p])


def _draw(seed, path_index, M, N, h, need_dz):
    sqrt_h = np.sqrt(h)
    dW = path_generator(seed, path_index, 0).standard_normal((N, M)) * sqrt_h
    dZ = None
    if need_dz:
        zeta = path_generator(seed, path_index, 1).standard_normal(N) * sqrt_h
        dZ = 0.5 * h * (dW[:, 0] + zeta / np.sqrt(3.0))
    return dW, dZ


def _check(M, N, h, need_dz):
    if int(N) != N or N < 1:
        raise ValueError(f"need N >= 1 steps, got {N}")
    if not h > 0:
        raise ValueError(f"need h > 0, got {h}")
    if int(M) != M or M < 0:
        raise ValueError(f"need M >= 0 channels, got {M}")
    if need_dz and M != 1:
        raise ValueError("dZ is only defined for a single noise channel (M = 1)")


def sample_grid(seed, path_index, M, N, h, need_dz=False):
    """Increments of path ``path_index`` under master ``seed``."""
    _check(M, N, h, need_dz)
    dW, dZ = _draw(seed, path_index, int(M), int(N), float(h), need_dz)
    return NoiseGrid(int(M), int(N), float(h), dW, dZ, seed, path_index)


def sample_paths(seed, path_indices, M, N, h, need_dz=False):
    """Stack the grids of several paths into a :class:`PathNoise`."""
    _check(M, N, h, need_dz)
    draws = [_draw(seed, int(p), int(M), int(N), float(h), need_dz) for p in path_indices]
    dW = np.stack([d[0] for d in draws])
    dZ = np.stack([d[1] for d in draws]) if need_dz else None
    return PathNoise(float(h), dW, dZ)


class PathStream:
    """Draw the increments of a batch of paths chunk by chunk.

    Successive :meth:`next` calls continue each path's streams, so the
    concatenated chunks equal :func:`sample_paths` over the full horizon
    bit-for-bit.  Memory stays proportional to the chunk length.
    """

    def __init__(self, seed, path_indices, M, h, need_dz=False):
        _check(M, 1, h, need_dz)
        self.M = int(M)
        self.h = float(h)
        self.need_dz = need_dz
        self._w = [path_generator(seed, int(p), 0) for p in path_indices]
        self._z = [path_generator(seed, int(p), 1) for p in path_indices] if need_dz else None

    def next(self, N):
        sqrt_h = np.sqrt(self.h)
        dW = np.stack([g.standard_normal((N, self.M)) * sqrt_h for g in self._w])
        dZ = None
        if self.need_dz:
            zeta = np.stack([g.standard_normal(N) * sqrt_h for g in self._z])
            dZ = 0.5 * self.h * (dW[:, :, 0] + zeta / np.sqrt(3.0))
        return PathNoise(self.h, dW, dZ)


def _prime_factors(n):
    out, p = [], 2
    while p * p <= n:
        while n % p == 0:
            out.append(p)
            n //= p
        p += 1
    if n > 1:
        out.append(n)
    return out


def _merge(dW, dZ, h, p, axis):
    dW = np.moveaxis(dW, axis, 0)
    blocks = dW.reshape((dW.shape[0] // p, p) + dW.shape[1:])
    if dZ is not None:
        zb = np.moveaxis(dZ, axis, 0)
        zb = zb.reshape((zb.shape[0] // p, p) + zb.shape[1:])
    acc_w = blocks[:, 0]
    acc_z = None if dZ is None else zb[:, 0]
    for k in range(1, p):
        if dZ is not None:
            # integral over sub-block k of W(s) - W(block start)
            acc_z = acc_z + (zb[:, k] + h * acc_w[..., 0])
        acc_w = acc_w + blocks[:, k]
    new_w = np.moveaxis(acc_w, 0, axis)
    new_z = None if dZ is None else np.moveaxis(acc_z, 0, axis)
    return new_w, new_z


def coarsen_increments(dW, dZ, h, factor, axis=0):
    """Sum blocks of ``factor`` consecutive increments along ``axis``.

    ``factor`` is split into prime factors (ascending) and merged one prime
    at a time with a fixed left-to-right order, so coarsening by 2 twice is
    bit-identical to coarsening by 4.  ``dZ`` (if given) is merged with the
    exact rule ``Z = Z_a + Z_b + h_a dW_a`` and must belong to a single channel.
    """
    if int(factor) != factor or factor < 1:
        raise ValueError(f"factor must be a positive integer, got {factor}")
    factor = int(factor)
    n = np.shape(dW)[axis]
    if n % factor:
        raise ValueError(f"factor {factor} does not divide the step count {n}")
    if dZ is not None and np.shape(dW)[-1] != 1:
        raise ValueError("dZ coarsening needs a single noise channel")
    for p in _prime_factors(factor):
        dW, dZ = _merge(dW, dZ, h, p, axis)
        h = h * p
    return dW, dZ, h


def coarsen(grid, factor):
    """Coarser view of ``grid``: ``N / factor`` steps of size ``h * factor``."""
    dW, dZ, h = coarsen_increments(grid.dW, grid.dZ, grid.h, factor, axis=0)
    return NoiseGrid(grid.M, grid.N // int(factor), h, dW, dZ, grid.seed, grid.path_index)


def total_increment(grid):
    """``W(T) - W(t0)`` by pairwise summation matching repeated coarsening by 2.

    For power-of-two step counts the value is bit-identical before and after
    any power-of-two coarsening.
    """
    x = grid.dW
    while x.shape[0] > 1:
        if x.shape[0] % 2:
            head = x[:-1:2] + x[1::2]
            x = np.concatenate([head, x[-1:]])
        else:
            x = x[0::2] + x[1::2]
    return x[0].copy()
