"""Problem data for the stochastic LQ control of the 1D heat equation.

    minimize  1/2 E[ int_0^T ||X||^2 + ||U||^2 dt ] + alpha/2 E ||X(T)||^2
    s.t.      dX = (Laplace X + U) dt + (beta X + sigma(t)) dW,   X(0) = x0

with homogeneous Dirichlet conditions and a scalar Brownian motion W.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .fem import FemSpace, project_l2
from .stochastics import TimeGrid

Initial = Callable[[np.ndarray], np.ndarray]
Intensity = Callable[[float, np.ndarray], np.ndarray]


def zero_initial(x: np.ndarray) -> np.ndarray:
    return np.zeros_like(x)


def zero_intensity(t: float, x: np.ndarray) -> np.ndarray:
    return np.zeros_like(x)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    space: FemSpace
    grid: TimeGrid
    beta: float = 0.0
    alpha: float = 0.0
    x0: Initial = field(default=zero_initial)
    sigma: Intensity = field(default=zero_intensity)

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"terminal weight must be non-negative, got alpha={self.alpha}")

    @property
    def T(self) -> float:
        return self.grid.T

    @property
    def tau(self) -> float:
        return self.grid.tau

    @cached_property
    def x0_coeffs(self) -> np.ndarray:
        """Spectral coefficients of the projected initial state."""
        return project_l2(self.x0, self.space).coeffs

    @cached_property
    def sigma_coeffs(self) -> np.ndarray:
        """Projected noise intensity at every grid node, shape (N+1, dim)."""
        return np.stack(
            [project_l2(lambda x, t=t: self.sigma(t, x), self.space).coeffs for t in self.grid.nodes]
        )

    @cached_property
    def step_factors(self) -> np.ndarray:
        """Eigenvalues of A_0 = (I - tau Delta_h)^{-1}."""
        return 1.0 / (1.0 + self.tau * self.space.eigenvalues)


def implicit_step_factors(space: FemSpace, tau: float, shift: float = 0.0) -> np.ndarray:
    """Eigenvalues of (I - tau (Delta_h + shift))^{-1}."""
    return 1.0 / (1.0 + tau * (space.eigenvalues - shift))
