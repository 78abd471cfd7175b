"""Time grids and reproducible scalar Brownian increments.

Each path is drawn from its own counter-based stream (Philox4x64, keyed by the
pair ``(master_seed, path_index)``), so a path never depends on how many other
paths were generated before it or on which worker generated it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.special import ndtri

_U64 = 2**64


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError(f"horizon must be positive, got T={self.T}")
        if self.N < 1:
            raise ValueError(f"need at least one step, got N={self.N}")

    @property
    def tau(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        return self.tau * np.arange(self.N + 1)


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    path_index: int

    def __post_init__(self):
        if not 0 <= self.master_seed < _U64:
            raise ValueError(f"master_seed must fit in 64 bits, got {self.master_seed}")
        if not 0 <= self.path_index < _U64:
            raise ValueError(f"path_index must be a non-negative 64-bit integer, got {self.path_index}")


@dataclass(frozen=True, eq=False)
class BrownianPath:
    grid: TimeGrid
    increments: np.ndarray

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        if inc.shape != (self.grid.N,):
            raise ValueError(f"expected {self.grid.N} increments, got shape {inc.shape}")
        object.__setattr__(self, "increments", inc)

    @property
    def values(self) -> np.ndarray:
        """W(t_n) for n = 0..N, with W(0) = 0."""
        return np.concatenate([[0.0], np.cumsum(self.increments)])


def standard_normals(seed: SeedSpec, count: int) -> np.ndarray:
    """``count`` N(0,1) draws from the stream keyed by ``seed``.

    The top 53 bits of each raw 64-bit word give a uniform strictly inside
    (0, 1); the normal is its inverse CDF.
    """
    bits = np.random.Philox(key=[seed.master_seed, seed.path_index]).random_raw(count)
    u = ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


def sample_path(grid: TimeGrid, seed: SeedSpec) -> BrownianPath:
    return BrownianPath(grid, np.sqrt(grid.tau) * standard_normals(seed, grid.N))


def sample_increments(grid: TimeGrid, master_seed: int, indices: Iterable[int]) -> np.ndarray:
    """Increments of several paths stacked into an array of shape (len(indices), N)."""
    rows = [sample_path(grid, SeedSpec(master_seed, int(i))).increments for i in indices]
    if not rows:
        return np.zeros((0, grid.N))
    return np.stack(rows)


def _prime_factors(n: int) -> list[int]:
    out, p = [], 2
    while p * p <= n:
        while n % p == 0:
            out.append(p)
            n //= p
        p += 1
    if n > 1:
        out.append(n)
    return out


def coarsen_increments(increments: np.ndarray, factor: int) -> np.ndarray:
    """Block sums of ``factor`` consecutive increments along the last axis.

    The sum is taken one prime factor at a time (smallest first), so that
    coarsening by 2 twice gives bitwise the same numbers as coarsening by 4.
    """
    increments = np.asarray(increments, dtype=float)
    n = increments.shape[-1]
    if factor < 1 or n % factor:
        raise ValueError(f"factor {factor} does not divide the step count {n}")
    out = increments
    for p in _prime_factors(factor):
        out = out.reshape(out.shape[:-1] + (out.shape[-1] // p, p))
        acc = out[..., 0].copy()
        for k in range(1, p):
            acc += out[..., k]
        out = acc
    return out


def coarsen(path: BrownianPath, factor: int) -> BrownianPath:
    if factor < 1 or path.grid.N % factor:
        raise ValueError(f"factor {factor} does not divide N={path.grid.N}")
    grid = TimeGrid(path.grid.T, path.grid.N // factor)
    return BrownianPath(grid, coarsen_increments(path.increments, factor))
