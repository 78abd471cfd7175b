"""Feedback-controlled state simulation and the discrete cost functional.

Trajectories are arrays of spectral coefficients. Batch routines take
increments of shape (M, N) and return states of shape (M, N+1, dim) and
controls of shape (M, N, dim); every operation is elementwise over paths, so
splitting a batch into chunks gives bitwise identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .problem import ProblemSpec
from .riccati import EtaSequence, RiccatiSolution
from .stochastics import BrownianPath


@dataclass(frozen=True, eq=False)
class TrajectoryPair:
    X: np.ndarray  # (N+1, dim)
    U: np.ndarray  # (N, dim)
    path: BrownianPath


@dataclass(frozen=True)
class CostEstimate:
    mean: float
    std_error: float
    n_paths: int


def _as_batch(increments: np.ndarray, N: int) -> np.ndarray:
    inc = np.asarray(increments, dtype=float)
    if inc.ndim == 1:
        inc = inc[None, :]
    if inc.ndim != 2 or inc.shape[1] != N:
        raise ValueError(f"increments must have shape (M, {N}), got {np.shape(increments)}")
    return inc


def simulate_feedback_batch(P: RiccatiSolution, eta: EtaSequence, spec: ProblemSpec,
                            increments: np.ndarray, offset: np.ndarray | None = None
                            ) -> tuple[np.ndarray, np.ndarray]:
    """Closed-loop scheme

        U_n     = -P_{n+1} X_n - eta_n (+ offset_n)
        X_{n+1} = A0 X_n + tau A0 U_n + (beta A0 X_n + A0 sigma_n) dW_{n+1}

    ``offset`` is an optional deterministic perturbation of the control, shape (N, dim).
    """
    N, d = spec.grid.N, spec.space.dim
    if P.grid != spec.grid or P.diag.shape != (N + 1, d) or eta.eta.shape != (N + 1, d):
        raise ValueError("Riccati solution, eta and problem must share grid and space")
    inc = _as_batch(increments, N)
    a, tau, beta = spec.step_factors, spec.tau, spec.beta
    sig = spec.sigma_coeffs
    M = inc.shape[0]
    X = np.empty((M, N + 1, d))
    U = np.empty((M, N, d))
    X[:, 0] = spec.x0_coeffs
    for n in range(N):
        u = -P.diag[n + 1] * X[:, n] - eta.eta[n]
        if offset is not None:
            u = u + offset[n]
        U[:, n] = u
        dw = inc[:, n:n + 1]
        X[:, n + 1] = a * X[:, n] + tau * a * u + (beta * a * X[:, n] + a * sig[n]) * dw
    return X, U


def simulate_feedback(P: RiccatiSolution, eta: EtaSequence, spec: ProblemSpec,
                      path: BrownianPath) -> TrajectoryPair:
    if path.grid != spec.grid:
        raise ValueError("path grid differs from problem grid")
    X, U = simulate_feedback_batch(P, eta, spec, path.increments)
    return TrajectoryPair(X[0], U[0], path)


def simulate_forward_given_control(U: np.ndarray, spec: ProblemSpec,
                                   increments: np.ndarray | BrownianPath) -> np.ndarray:
    """Open-loop state scheme for a given control.

        X_{n+1} = A0 (X_n + tau U_n + (beta X_n + sigma_n) dW_{n+1})

    Expanding A0 shows this is the state update of the feedback scheme; it is
    a separate entry point because the control is an arbitrary given process.
    ``U`` has shape (N, dim) or (M, N, dim); ``increments`` shape (N,) or (M, N).
    The result has shape (M, N+1, dim), or (N+1, dim) for a single path.
    """
    N, d = spec.grid.N, spec.space.dim
    single = isinstance(increments, BrownianPath) or np.ndim(increments) == 1
    if isinstance(increments, BrownianPath):
        increments = increments.increments
    inc = _as_batch(increments, N)
    U = np.asarray(U, dtype=float)
    if U.shape[-2:] != (N, d):
        raise ValueError(f"control must have trailing shape ({N}, {d}), got {U.shape}")
    a, tau, beta = spec.step_factors, spec.tau, spec.beta
    sig = spec.sigma_coeffs
    M = inc.shape[0]
    X = np.empty((M, N + 1, d))
    X[:, 0] = spec.x0_coeffs
    for n in range(N):
        u = U[..., n, :]
        dw = inc[:, n:n + 1]
        X[:, n + 1] = a * (X[:, n] + tau * u + (beta * X[:, n] + sig[n]) * dw)
    return X[0] if single else X


def path_costs(X: np.ndarray, U: np.ndarray, tau: float, alpha: float,
               convention: str = "left") -> np.ndarray:
    """Discrete cost of each path.

    ``left`` sums the running state cost over n = 0..N-1, ``right`` over n = 1..N.
    """
    X = np.asarray(X)
    U = np.asarray(U)
    if X.ndim == 2:
        X, U = X[None], U[None]
    if convention == "left":
        xs = X[:, :-1]
    elif convention == "right":
        xs = X[:, 1:]
    else:
        raise ValueError(f"unknown index convention {convention!r}")
    running = tau * np.sum(xs**2, axis=(1, 2)) + tau * np.sum(U**2, axis=(1, 2))
    return 0.5 * running + 0.5 * alpha * np.sum(X[:, -1] ** 2, axis=1)


def summarize(samples: np.ndarray) -> CostEstimate:
    samples = np.asarray(samples, dtype=float).ravel()
    m = samples.size
    if m == 0:
        raise ValueError("cannot summarize an empty collection")
    mean = math.fsum(samples) / m
    if m == 1:
        return CostEstimate(mean, 0.0, 1)
    var = math.fsum((samples - mean) ** 2) / (m - 1)
    return CostEstimate(mean, math.sqrt(var / m), m)


def evaluate_discrete_cost(trajectories: Sequence[TrajectoryPair], alpha: float,
                           convention: str = "left") -> CostEstimate:
    if len(trajectories) == 0:
        raise ValueError("empty trajectory collection")
    tau = trajectories[0].path.grid.tau
    X = np.stack([tr.X for tr in trajectories])
    U = np.stack([tr.U for tr in trajectories])
    return summarize(path_costs(X, U, tau, alpha, convention))
