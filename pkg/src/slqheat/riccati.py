"""Difference Riccati schemes, the eta recursion, and their reference solutions.

Two consistent backward schemes are provided. Both come from discretizing the
deterministic auxiliary LQ problem whose Riccati equation is the stochastic one:

* ``V1`` steps with the shifted operator ``(I - tau (Delta_h + beta^2/2))^{-1}``
  and needs ``1 + tau (lambda_i - beta^2/2) > 0`` for every mode.
* ``V2`` steps with ``A_0 = (I - tau Delta_h)^{-1}`` and carries the shift as the
  scalar factor ``1 + beta^2 tau / 2``; it needs no restriction on beta.

All operators are functions of Delta_h and therefore diagonal in spectral
coordinates. The diagonal recursion is the fast path; the dense recursion
runs the general matrix update and is kept alongside it as a cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from .fem import FemFunction, FemSpace
from .problem import ProblemSpec, implicit_step_factors
from .stochastics import TimeGrid

DENSE_DIM_LIMIT = 64
SCHEMES = ("V1", "V2")


@dataclass(frozen=True, eq=False)
class DiagonalOp:
    entries: np.ndarray

    def apply(self, coeffs: np.ndarray) -> np.ndarray:
        return self.entries * coeffs

    def __call__(self, v: FemFunction) -> FemFunction:
        return FemFunction(v.space, self.apply(v.coeffs))

    def dense(self) -> np.ndarray:
        return np.diag(self.entries)


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    scheme: str
    space: FemSpace
    grid: TimeGrid
    diag: np.ndarray  # (N+1, dim)
    dense: np.ndarray | None  # (N+1, dim, dim) or None above DENSE_DIM_LIMIT
    step_factors: np.ndarray  # eigenvalues of the scheme's step operator
    growth: float  # 1 for V1, 1 + beta^2 tau / 2 for V2

    def diagonal(self, n: int) -> DiagonalOp:
        return DiagonalOp(self.diag[n])

    def matrix(self, n: int) -> np.ndarray:
        if self.dense is not None:
            return self.dense[n]
        return np.diag(self.diag[n])

    def quadratic_form(self, n: int, z: np.ndarray) -> float:
        """(P_n z, z) for spectral coefficients z."""
        z = np.asarray(z)
        return float(z @ (self.diag[n] * z))


@dataclass(frozen=True, eq=False)
class EtaSequence:
    eta: np.ndarray  # (N+1, dim), eta[N] == 0


def riccati_step_dense(step: np.ndarray, p_next: np.ndarray, tau: float, growth: float = 1.0) -> np.ndarray:
    """One backward step of the difference Riccati recursion for dense operators.

    P_n = g^2 A P A + tau I - tau H K^{-1} H,  H = g A P A,  K = I + tau A P A.
    """
    q = step @ p_next @ step.T
    k = np.eye(q.shape[0]) + tau * q
    h = growth * q
    return growth * h + tau * np.eye(q.shape[0]) - tau * h @ linalg.solve(k, h, assume_a="pos")


def riccati_step_diag(step: np.ndarray, p_next: np.ndarray, tau: float, growth: float = 1.0) -> np.ndarray:
    q = step * p_next * step
    return growth**2 * q / (1.0 + tau * q) + tau


def _v1_factors(space: FemSpace, tau: float, beta: float) -> np.ndarray:
    margin = 1.0 + tau * (space.eigenvalues - 0.5 * beta**2)
    bad = np.flatnonzero(margin <= 0)
    if bad.size:
        i = int(bad[0])
        raise ValueError(
            f"scheme V1 not defined: 1 + tau*(lambda_{i + 1} - beta^2/2) = {margin[i]:.3g} <= 0 "
            f"(lambda={space.eigenvalues[i]:.6g}, tau={tau:.3g}, beta={beta}); "
            "use a smaller tau or scheme V2"
        )
    return implicit_step_factors(space, tau, 0.5 * beta**2)


def _solve(scheme: str, space: FemSpace, grid: TimeGrid, beta: float, alpha: float,
           dense: bool | None) -> RiccatiSolution:
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    tau, N, d = grid.tau, grid.N, space.dim
    if scheme == "V1":
        step, growth = _v1_factors(space, tau, beta), 1.0
    elif scheme == "V2":
        step, growth = implicit_step_factors(space, tau), 1.0 + 0.5 * beta**2 * tau
    else:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if dense is None:
        dense = d <= DENSE_DIM_LIMIT

    diag = np.empty((N + 1, d))
    diag[N] = alpha
    for n in range(N - 1, -1, -1):
        diag[n] = riccati_step_diag(step, diag[n + 1], tau, growth)

    mats = None
    if dense:
        mats = np.empty((N + 1, d, d))
        mats[N] = alpha * np.eye(d)
        a = np.diag(step)
        for n in range(N - 1, -1, -1):
            mats[n] = riccati_step_dense(a, mats[n + 1], tau, growth)
    return RiccatiSolution(scheme, space, grid, diag, mats, step, growth)


def solve_riccati_v1(space: FemSpace, grid: TimeGrid, beta: float, alpha: float,
                     dense: bool | None = None) -> RiccatiSolution:
    return _solve("V1", space, grid, beta, alpha, dense)


def solve_riccati_v2(space: FemSpace, grid: TimeGrid, beta: float, alpha: float,
                     dense: bool | None = None) -> RiccatiSolution:
    return _solve("V2", space, grid, beta, alpha, dense)


def solve_riccati(scheme: str, space: FemSpace, grid: TimeGrid, beta: float, alpha: float,
                  dense: bool | None = None) -> RiccatiSolution:
    return _solve(scheme, space, grid, beta, alpha, dense)


def scalar_riccati(lam: np.ndarray, beta: float, alpha: float, T: float, t: float) -> np.ndarray:
    """Closed-form solution of p' = p^2 + (2 lam - beta^2) p - 1, p(T) = alpha.

    With a = lam - beta^2/2 and s = sqrt(a^2 + 1) the roots are r1 = -a + s > 0 and
    r2 = -a - s < 0, and (p - r1)/(p - r2) decays like exp(2 s (t - T)) backwards.
    """
    lam = np.asarray(lam, dtype=float)
    a = lam - 0.5 * beta**2
    s = np.sqrt(a * a + 1.0)
    r1 = np.where(a > 0, 1.0 / (a + s), s - a)  # cancellation-free -a + s
    r2 = -a - s
    q = (alpha - r1) / (alpha - r2) * np.exp(2.0 * s * (t - T))
    return (r1 - q * r2) / (1.0 - q)


def solve_riccati_ode_reference(space: FemSpace, beta: float, alpha: float, T: float,
                                eval_times: Sequence[float]) -> list[DiagonalOp]:
    """Spatially semi-discrete Riccati solution P_h(t), mode by mode, at ``eval_times``."""
    out = []
    for t in eval_times:
        if not 0.0 <= t <= T:
            raise ValueError(f"evaluation time {t} outside [0, {T}]")
        out.append(DiagonalOp(scalar_riccati(space.eigenvalues, beta, alpha, T, t)))
    return out


def solve_eta(P: RiccatiSolution, spec: ProblemSpec) -> EtaSequence:
    """Backward recursion eta_n = A0 eta_{n+1} + tau A0 (-P_{n+1} eta_{n+1} + beta P_{n+1} sigma_{n+1})."""
    if P.grid != spec.grid or P.space is not spec.space:
        raise ValueError("Riccati solution and problem use different grids or spaces")
    a, tau, N = spec.step_factors, spec.tau, spec.grid.N
    sig = spec.sigma_coeffs
    eta = np.zeros((N + 1, spec.space.dim))
    for n in range(N - 1, -1, -1):
        p = P.diag[n + 1]
        eta[n] = a * eta[n + 1] + tau * a * (-p * eta[n + 1] + spec.beta * p * sig[n + 1])
    return EtaSequence(eta)


def brute_force_lq_value(space: FemSpace, grid: TimeGrid, beta: float, alpha: float, start: int,
                         z: FemFunction | np.ndarray, scheme: str) -> float:
    """Optimal discrete auxiliary LQ cost from state z at t_start.

    The controls u_start..u_{N-1} are stacked into one vector, the cost is written
    as 1/2 u^T Q u + b^T u + c through the scheme's linear state map, and the
    normal equations are solved directly. No Riccati recursion is involved.
    """
    N, d, tau = grid.N, space.dim, grid.tau
    if not 0 <= start < N:
        raise ValueError(f"start index must be in [0, {N - 1}], got {start}")
    steps = N - start
    if steps * d > 64:
        raise ValueError(f"(N - l) * dim = {steps * d} exceeds 64; instance too large for brute force")
    z = np.asarray(z.coeffs if isinstance(z, FemFunction) else z, dtype=float)
    if scheme == "V1":
        a, g = _v1_factors(space, tau, beta), 1.0
    elif scheme == "V2":
        a, g = implicit_step_factors(space, tau), 1.0 + 0.5 * beta**2 * tau
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    A = np.diag(a)

    # x_{start+k} = G_k z + L_k u with x_{n+1} = g A x_n + tau A u_n
    G = np.eye(d)
    L = np.zeros((d, steps * d))
    Q = tau * np.eye(steps * d)
    b = np.zeros(steps * d)
    c = 0.5 * tau * float(z @ z)
    for k in range(steps):
        G_next = g * A @ G
        L_next = g * A @ L
        L_next[:, k * d:(k + 1) * d] += tau * A
        G, L = G_next, L_next
        x0 = G @ z
        w = alpha if k == steps - 1 else tau
        Q += w * L.T @ L
        b += w * L.T @ x0
        c += 0.5 * w * float(x0 @ x0)
    u = linalg.solve(Q, -b, assume_a="pos")
    return c + 0.5 * float(b @ u)
