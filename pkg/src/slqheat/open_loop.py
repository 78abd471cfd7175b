"""Gradient descent for the fully discrete SLQ problem.

The discrete cost is quadratic in the control and its gradient in the
tau-weighted inner product of square-integrable adapted controls is U - Y,
where

    Y_n = -E^{t_n}[Theta_n],
    Theta_n = tau sum_{j=n+1}^{N-1} A0^{j-n} prod_{k=n+2}^{j} (1 + beta dW_k) X_j
              + alpha A0^{N-n} prod_{k=n+2}^{N} (1 + beta dW_k) X_N.

Two solvers are provided.

* For additive noise (beta = 0) a control of the form

      U_n = sum_{m=1}^{n} Pi_m f[n, m] + sum_{m=1}^{n} dW_m ft[n, m] + g[n],
      Pi_m = prod_{i=1}^{m} (1 + dW_i),

  is mapped to a control of the same form, so the iteration runs on the
  deterministic coefficient arrays and every expectation is exact.
* For general beta the iteration runs on Monte-Carlo paths and each
  conditional expectation is replaced by a partitioning regression on the
  current state.

Exact expectations use the random basis {1, Pi_1..Pi_{N-1}, dW_1..dW_N}, whose
Gram matrix follows from E[Pi_m Pi_k] = (1+tau)^min(m,k),
E[Pi_m dW_k] = tau 1{k <= m} and E[dW_m dW_k] = tau delta_mk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .closed_loop import path_costs, simulate_forward_given_control, summarize
from .problem import ProblemSpec
from .regression import default_cells, regress
from .stochastics import BrownianPath, sample_increments

Estimator = Callable[[int, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class CoefficientControl:
    """Deterministic coefficients of an adapted control.

    ``f`` and ``ftilde`` have shape (N, N, dim) and are indexed [n, m]; only
    entries with 1 <= m <= n are meaningful and all others must be zero.
    ``g`` has shape (N, dim).
    """

    f: np.ndarray
    ftilde: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        if g.ndim != 2:
            raise ValueError(f"g must have shape (N, dim), got {g.shape}")
        N, d = g.shape
        for name in ("f", "ftilde"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (N, N, d):
                raise ValueError(f"{name} must have shape {(N, N, d)}, got {arr.shape}")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "g", g)

    @classmethod
    def zeros(cls, N: int, dim: int) -> "CoefficientControl":
        return cls(np.zeros((N, N, dim)), np.zeros((N, N, dim)), np.zeros((N, dim)))

    @classmethod
    def deterministic(cls, g: np.ndarray) -> "CoefficientControl":
        g = np.asarray(g, dtype=float)
        N, d = g.shape
        return cls(np.zeros((N, N, d)), np.zeros((N, N, d)), g)

    @property
    def N(self) -> int:
        return self.g.shape[0]

    @property
    def dim(self) -> int:
        return self.g.shape[1]

    def check(self) -> None:
        """Raise if any coefficient lies outside the triangle 1 <= m <= n."""
        allowed = _triangle(self.N)[:, :, None]
        for name in ("f", "ftilde"):
            arr = getattr(self, name)
            if np.any(arr[~np.broadcast_to(allowed, arr.shape)] != 0.0):
                raise ValueError(f"{name} has entries outside 1 <= m <= n")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
        if not np.all(np.isfinite(self.g)):
            raise ValueError("g has non-finite entries")

    def _combine(self, other: "CoefficientControl", s: float) -> "CoefficientControl":
        if self.g.shape != other.g.shape:
            raise ValueError("controls live on different grids or spaces")
        return CoefficientControl(self.f + s * other.f, self.ftilde + s * other.ftilde, self.g + s * other.g)

    def __add__(self, other: "CoefficientControl") -> "CoefficientControl":
        return self._combine(other, 1.0)

    def __sub__(self, other: "CoefficientControl") -> "CoefficientControl":
        return self._combine(other, -1.0)

    def __mul__(self, s: float) -> "CoefficientControl":
        return CoefficientControl(s * self.f, s * self.ftilde, s * self.g)

    __rmul__ = __mul__


@dataclass(frozen=True)
class GdConfig:
    kappa: float
    max_iters: int = 200
    tol: float = 1e-10

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be positive, got {self.max_iters}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")


@dataclass
class GdReport:
    iterations_run: int = 0
    distances: list[float] = field(default_factory=list)
    costs: list[float] = field(default_factory=list)
    final_cost: float = float("nan")
    converged: bool = False


def _triangle(N: int) -> np.ndarray:
    n, m = np.indices((N, N))
    return (m >= 1) & (m <= n)


def kappa_bound_scalar(T: float, alpha: float, beta: float) -> float:
    growth = math.exp(beta**2 * T)
    return 1.0 + alpha * T * growth + T**2 * growth


def kappa_bound(spec: ProblemSpec) -> float:
    """Upper bound 1 + alpha T e^{beta^2 T} + T^2 e^{beta^2 T} on the gradient's Lipschitz constant."""
    return kappa_bound_scalar(spec.T, spec.alpha, spec.beta)


# ---------------------------------------------------------------------------
# moment algebra over the basis {1, Pi_1..Pi_{N-1}, dW_1..dW_N}


def basis_gram(N: int, tau: float) -> np.ndarray:
    """E[b_i b_j] for the 2N basis variables, ordered 1, Pi_1..Pi_{N-1}, dW_1..dW_N."""
    G = np.zeros((2 * N, 2 * N))
    m = np.arange(N)  # Pi_0 = 1 doubles as the constant
    G[:N, :N] = (1.0 + tau) ** np.minimum.outer(m, m)
    k = np.arange(1, N + 1)
    cross = tau * (k[None, :] <= m[:, None])
    G[:N, N:] = cross
    G[N:, :N] = cross.T
    G[N:, N:] = tau * np.eye(N)
    return G


def control_basis(U: CoefficientControl) -> np.ndarray:
    """Basis coefficients of every U_n, shape (N, 2N, dim)."""
    N, d = U.N, U.dim
    C = np.zeros((N, 2 * N, d))
    C[:, 0] = U.g
    C[:, 1:N] = U.f[:, 1:]
    C[:, N:2 * N - 1] = U.ftilde[:, 1:]
    return C


def _second_moments(C: np.ndarray, G: np.ndarray) -> np.ndarray:
    """E||Z_k||^2 for stacked basis coefficients C of shape (K, 2N, dim)."""
    return np.einsum("kbd,bc,kcd->k", C, G, C)


def control_norm_exact(U: CoefficientControl, tau: float) -> float:
    """Squared norm tau * sum_n E||U_n||^2."""
    G = basis_gram(U.N, tau)
    return float(tau * np.sum(_second_moments(control_basis(U), G)))


def state_basis(U: CoefficientControl, spec: ProblemSpec) -> np.ndarray:
    """Basis coefficients of the open-loop state X_0..X_N for beta = 0, shape (N+1, 2N, dim)."""
    N, d = spec.grid.N, spec.space.dim
    a, tau = spec.step_factors, spec.tau
    sig = spec.sigma_coeffs
    CU = control_basis(U)
    X = np.zeros((N + 1, 2 * N, d))
    X[0, 0] = spec.x0_coeffs
    for n in range(N):
        nxt = X[n] + tau * CU[n]
        nxt[N + n] += sig[n]  # dW_{n+1}
        X[n + 1] = a * nxt
    return X


def _require_additive(spec: ProblemSpec, what: str) -> None:
    if spec.beta != 0:
        raise ValueError(f"{what} needs beta = 0 (got beta={spec.beta}); use gd_run_mc for multiplicative noise")


def _require_match(U: CoefficientControl, spec: ProblemSpec) -> None:
    if U.g.shape != (spec.grid.N, spec.space.dim):
        raise ValueError(f"control shape {U.g.shape} does not match problem {(spec.grid.N, spec.space.dim)}")


def evaluate_cost_exact(U: CoefficientControl, spec: ProblemSpec, convention: str = "left") -> float:
    """Exact discrete cost of a coefficient control under additive noise."""
    _require_additive(spec, "exact cost evaluation")
    _require_match(U, spec)
    tau = spec.tau
    G = basis_gram(spec.grid.N, tau)
    xm = _second_moments(state_basis(U, spec), G)
    um = _second_moments(control_basis(U), G)
    if convention == "left":
        running = xm[:-1].sum()
    elif convention == "right":
        running = xm[1:].sum()
    else:
        raise ValueError(f"unknown index convention {convention!r}")
    return float(0.5 * tau * (running + um.sum()) + 0.5 * spec.alpha * xm[-1])


def evaluate_control_on_path(U: CoefficientControl, increments: np.ndarray | BrownianPath) -> np.ndarray:
    """Control values along one path (N, dim) or a batch of paths (M, N, dim)."""
    if isinstance(increments, BrownianPath):
        increments = increments.increments
    inc = np.asarray(increments, dtype=float)
    single = inc.ndim == 1
    inc = np.atleast_2d(inc)
    N = U.N
    if inc.shape[1] != N:
        raise ValueError(f"expected {N} increments per path, got {inc.shape[1]}")
    prods = np.ones_like(inc)
    prods[:, 1:] = np.cumprod(1.0 + inc[:, :-1], axis=1)  # prods[:, m] = Pi_m
    dws = np.zeros_like(inc)
    dws[:, 1:] = inc[:, :-1]  # dws[:, m] = dW_m
    out = np.einsum("pm,nmd->pnd", prods, U.f) + np.einsum("pm,nmd->pnd", dws, U.ftilde) + U.g
    return out[0] if single else out


# ---------------------------------------------------------------------------
# exact gradient step for additive noise


def adjoint_weights(spec: ProblemSpec) -> np.ndarray:
    """V[n, l] = tau sum_{j > max(n, l)}^{N-1} A0^{(j-n)+(j-l)} + alpha A0^{(N-n)+(N-l)}, shape (N, N, dim).

    Every sum in the coefficient recursion is a contraction against tau * V
    (the control terms) or against V itself (the initial-state and noise terms).
    """
    N = spec.grid.N
    a = spec.step_factors
    j = np.arange(N)
    gap = j[:, None] - j[None, :]  # j - n
    E = np.where((gap > 0)[:, :, None], a ** np.maximum(gap, 0)[:, :, None], 0.0)
    tail = a ** (N - j)[:, None]  # A0^{N-n}
    return spec.tau * np.einsum("jnd,jld->nld", E, E) + spec.alpha * tail[:, None, :] * tail[None, :, :]


def adjoint_coefficients(U: CoefficientControl, spec: ProblemSpec,
                         weights: np.ndarray | None = None) -> CoefficientControl:
    """Coefficients (F, Ft, G) of Y = -E^{t_n}[Theta_n] for a coefficient control U, beta = 0."""
    _require_additive(spec, "the exact coefficient recursion")
    _require_match(U, spec)
    N, tau = spec.grid.N, spec.tau
    V = adjoint_weights(spec) if weights is None else weights
    Wt = tau * V
    tri = _triangle(N)[:, :, None]
    f, ft = U.f, U.ftilde

    F = -np.einsum("nld,lmd->nmd", Wt, f)
    # diagonal entries also collect the future products collapsing onto Pi_n
    later = np.cumsum(f[:, ::-1], axis=1)[:, ::-1]  # later[l, k] = sum_{m >= k} f[l, m]
    tail = np.zeros_like(f)
    tail[:, :-1] = later[:, 1:]  # tail[l, n] = sum_{m > n} f[l, m]
    idx = np.arange(N)
    F[idx, idx] -= np.einsum("nld,lnd->nd", Wt, tail)
    F = np.where(tri, F, 0.0)

    sig = spec.sigma_coeffs
    Ft = -np.einsum("nld,lmd->nmd", Wt, ft)
    Ft[:, 1:] -= V[:, :-1] * sig[None, :N - 1]  # V[n, m-1] sigma_{m-1}
    Ft = np.where(tri, Ft, 0.0)

    G = -V[:, 0] * spec.x0_coeffs - np.einsum("nld,ld->nd", Wt, U.g)
    return CoefficientControl(F, Ft, G)


def gd_step_exact(U: CoefficientControl, spec: ProblemSpec, kappa: float | None = None,
                  weights: np.ndarray | None = None) -> tuple[CoefficientControl, CoefficientControl]:
    """One exact gradient step; returns (Y, U_next) with U_next = (1 - 1/kappa) U + Y / kappa."""
    if spec.beta != 0:
        raise ValueError(
            f"exact coefficient step needs beta = 0 (got beta={spec.beta}); use gd_run_mc for multiplicative noise"
        )
    kappa = kappa_bound(spec) if kappa is None else kappa
    Y = adjoint_coefficients(U, spec, weights)
    s = 1.0 / kappa
    return Y, CoefficientControl((1 - s) * U.f + s * Y.f, (1 - s) * U.ftilde + s * Y.ftilde,
                                 (1 - s) * U.g + s * Y.g)


def _check_kappa(spec: ProblemSpec, config: GdConfig) -> None:
    bound = kappa_bound(spec)
    if config.kappa < bound * (1 - 1e-12):
        raise ValueError(f"kappa={config.kappa} is below the admissible bound {bound:.6g}")


def gd_run(spec: ProblemSpec, config: GdConfig,
           U0: CoefficientControl | None = None) -> tuple[CoefficientControl, GdReport]:
    """Iterate the exact gradient step until successive controls are within ``tol``."""
    _require_additive(spec, "gd_run")
    _check_kappa(spec, config)
    U = CoefficientControl.zeros(spec.grid.N, spec.space.dim) if U0 is None else U0
    _require_match(U, spec)
    V = adjoint_weights(spec)
    report = GdReport()
    for it in range(1, config.max_iters + 1):
        _, U_next = gd_step_exact(U, spec, config.kappa, V)
        dist = math.sqrt(max(control_norm_exact(U_next - U, spec.tau), 0.0))
        U = U_next
        report.iterations_run = it
        report.distances.append(dist)
        report.costs.append(evaluate_cost_exact(U, spec))
        if dist < config.tol:
            report.converged = True
            break
    report.final_cost = report.costs[-1]
    return U, report


# ---------------------------------------------------------------------------
# Monte-Carlo gradient descent with regression


def theta_backward(X: np.ndarray, increments: np.ndarray, spec: ProblemSpec) -> np.ndarray:
    """Theta_n for n = 0..N-1 along each path by backward accumulation.

    Theta_{N-1} = alpha A0 X_N,
    Theta_n     = tau A0 X_{n+1} + (1 + beta dW_{n+2}) A0 Theta_{n+1}.
    ``X`` has shape (M, N+1, dim), ``increments`` (M, N); the result is (M, N, dim).
    """
    N = spec.grid.N
    a, tau, beta = spec.step_factors, spec.tau, spec.beta
    th = np.empty((X.shape[0], N, X.shape[2]))
    th[:, N - 1] = spec.alpha * a * X[:, N]
    for n in range(N - 2, -1, -1):
        th[:, n] = tau * a * X[:, n + 1] + (1.0 + beta * increments[:, n + 1:n + 2]) * a * th[:, n + 1]
    return th


def theta_direct(X: np.ndarray, increments: np.ndarray, spec: ProblemSpec) -> np.ndarray:
    """Theta_n from the explicit double sum; O(N^2) reference for ``theta_backward``."""
    N = spec.grid.N
    a, tau, beta = spec.step_factors, spec.tau, spec.beta
    M, d = X.shape[0], X.shape[2]
    th = np.zeros((M, N, d))
    for n in range(N):
        for j in range(n + 1, N):
            prod = np.ones((M, 1))
            for k in range(n + 2, j + 1):
                prod = prod * (1.0 + beta * increments[:, k - 1:k])
            th[:, n] += tau * a ** (j - n) * prod * X[:, j]
        prod = np.ones((M, 1))
        for k in range(n + 2, N + 1):
            prod = prod * (1.0 + beta * increments[:, k - 1:k])
        th[:, n] += spec.alpha * a ** (N - n) * prod * X[:, N]
    return th


def partition_estimator(R: int) -> Estimator:
    """Conditional mean of the target given the state, via one shared partition per time level."""

    def estimate(n: int, states: np.ndarray, targets: np.ndarray) -> np.ndarray:
        return regress(states, targets, R)

    return estimate


def gd_run_mc(spec: ProblemSpec, config: GdConfig, R: int | None = None, M: int = 1000,
              master_seed: int = 0, estimator: Estimator | None = None,
              increments: np.ndarray | None = None, U0: np.ndarray | None = None
              ) -> tuple[np.ndarray, GdReport]:
    """Gradient descent on M sample paths with regressed conditional expectations.

    Returns the per-path control realizations, shape (M, N, dim), and a report
    whose distances and costs are Monte-Carlo estimates on the same paths.
    ``increments`` overrides the paths drawn from ``master_seed``.
    """
    _check_kappa(spec, config)
    N, d = spec.grid.N, spec.space.dim
    if increments is None:
        increments = sample_increments(spec.grid, master_seed, range(M))
    inc = np.asarray(increments, dtype=float)
    M = inc.shape[0]
    if R is None:
        R = default_cells(M)
    if M < 10 * R:
        raise ValueError(f"need at least 10*R = {10 * R} paths, got M={M}")
    est = partition_estimator(R) if estimator is None else estimator

    U = np.zeros((M, N, d)) if U0 is None else np.array(U0, dtype=float)
    report = GdReport()

    def cost(U):
        X = simulate_forward_given_control(U, spec, inc)
        return X, summarize(path_costs(X, U, spec.tau, spec.alpha)).mean

    X, _ = cost(U)
    for it in range(1, config.max_iters + 1):
        theta = theta_backward(X, inc, spec)
        Y = np.empty_like(U)
        for n in range(N):
            Y[:, n] = -np.asarray(est(n, X[:, n], theta[:, n])).reshape(M, d)
        step = (U - Y) / config.kappa
        U = U - step
        dist = math.sqrt(spec.tau * float(np.sum(step**2)) / M)
        X, c = cost(U)
        report.iterations_run = it
        report.distances.append(dist)
        report.costs.append(c)
        if dist < config.tol:
            report.converged = True
            break
    report.final_cost = report.costs[-1]
    return U, report

