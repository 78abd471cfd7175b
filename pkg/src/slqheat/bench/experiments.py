"""Convergence and comparison experiments behind the CLI subcommands.

Monte-Carlo work is split into fixed-size chunks of path indices. Chunks are
processed by a thread pool and their results are concatenated in index order,
so every reported number is independent of the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..closed_loop import path_costs, simulate_feedback_batch, summarize
from ..fem import FemSpace, assemble_space, prolong
from ..open_loop import GdConfig, gd_run, gd_run_mc, kappa_bound
from ..problem import ProblemSpec
from ..regression import default_cells, regress
from ..riccati import solve_eta, solve_riccati
from ..stochastics import TimeGrid, coarsen_increments, sample_increments
from .config import ExperimentConfig, parse_initial, parse_intensity
from .rates import RateResult, fit_rate

CHUNK = 250


@dataclass
class Table:
    header: list[str]
    rows: list[list[float]]


def make_problem(cfg: ExperimentConfig, n_elements: int, N: int, beta: float | None = None) -> ProblemSpec:
    space = assemble_space(cfg.a, cfg.b, n_elements)
    return ProblemSpec(
        space,
        TimeGrid(cfg.T, N),
        cfg.beta if beta is None else beta,
        cfg.alpha,
        x0=parse_initial(cfg.x0, cfg.a, cfg.b),
        sigma=parse_intensity(cfg.sigma, cfg.a, cfg.b, cfg.T),
    )


def map_chunks(fn: Callable[[np.ndarray], np.ndarray], M: int, workers: int) -> np.ndarray:
    """Apply ``fn`` to consecutive chunks of path indices and stack the results in order."""
    chunks = [np.arange(s, min(s + CHUNK, M)) for s in range(0, M, CHUNK)]
    if workers <= 1:
        parts = [fn(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, chunks))
    return np.concatenate(parts, axis=0)


def _fit_or_flag(pairs: list[tuple[float, float]]) -> RateResult:
    if all(e == 0.0 for _, e in pairs):
        return RateResult.degenerate_of(pairs)
    return fit_rate(pairs)


def _feedback_solution(spec: ProblemSpec, scheme: str):
    P = solve_riccati(scheme, spec.space, spec.grid, spec.beta, spec.alpha, dense=False)
    return P, solve_eta(P, spec)


# ---------------------------------------------------------------------------


def run_riccati_rate(cfg: ExperimentConfig) -> tuple[RateResult, RateResult, Table]:
    """Error of P_0 against the V2 scheme at N_ref steps, in a weighted and a plain sup norm.

    The weighted norm sup_i lambda_i^{-1/2} |p_i - p_i^ref| stands in for the H^1 -> L^2
    operator norm, the plain sup for the L^2 operator norm.
    """
    Ns = sorted(cfg.N)
    if len(Ns) < 3:
        raise ValueError("need at least 3 time resolutions")
    if cfg.N_ref < 16 * Ns[-1] or cfg.N_ref % Ns[-1]:
        raise ValueError(f"N_ref={cfg.N_ref} must be a multiple of and at least 16x the finest N={Ns[-1]}")
    space = assemble_space(cfg.a, cfg.b, cfg.n_elements[0])
    ref = solve_riccati("V2", space, TimeGrid(cfg.T, cfg.N_ref), cfg.beta, cfg.alpha, dense=False).diag[0]
    w = 1.0 / np.sqrt(space.eigenvalues)
    rows = []
    for N in Ns:
        p0 = solve_riccati(cfg.scheme, space, TimeGrid(cfg.T, N), cfg.beta, cfg.alpha, dense=False).diag[0]
        diff = np.abs(p0 - ref)
        rows.append([N, cfg.T / N, float(np.max(w * diff)), float(np.max(diff))])
    weighted = _fit_or_flag([(r[1], r[2]) for r in rows])
    plain = _fit_or_flag([(r[1], r[3]) for r in rows])
    return weighted, plain, Table(["N", "tau", "err_weighted", "err_sup"], rows)


def run_time_rate_closed(cfg: ExperimentConfig) -> tuple[RateResult, Table]:
    """Strong error max_n sqrt(E||X_ref(t_n) - X_n||^2) of the feedback system on coarsened paths."""
    Ns = sorted(cfg.N)
    if len(Ns) < 3:
        raise ValueError("need at least 3 time resolutions")
    if cfg.beta != 0 and cfg.M < 1000:
        raise ValueError(f"multiplicative noise needs at least 1000 paths, got M={cfg.M}")
    if any(cfg.N_ref % N for N in Ns) or cfg.N_ref <= Ns[-1]:
        raise ValueError(f"N_ref={cfg.N_ref} must be a strict multiple of every N")
    n_el = cfg.n_elements[0]
    fine = make_problem(cfg, n_el, cfg.N_ref)
    P_ref, eta_ref = _feedback_solution(fine, cfg.scheme)
    coarse = []
    for N in Ns:
        spec = make_problem(cfg, n_el, N)
        coarse.append((spec, *_feedback_solution(spec, cfg.scheme)))

    def chunk_errors(idx: np.ndarray) -> np.ndarray:
        inc = sample_increments(fine.grid, cfg.seed, idx)
        X_ref, _ = simulate_feedback_batch(P_ref, eta_ref, fine, inc)
        out = []
        for spec, P, eta in coarse:
            factor = cfg.N_ref // spec.grid.N
            X, _ = simulate_feedback_batch(P, eta, spec, coarsen_increments(inc, factor))
            err = np.sum((X_ref[:, ::factor] - X) ** 2, axis=2)  # (m, N+1)
            out.append(err)
        width = max(e.shape[1] for e in out)
        stacked = np.full((len(idx), len(out), width), np.nan)
        for k, e in enumerate(out):
            stacked[:, k, : e.shape[1]] = e
        return stacked

    errs = map_chunks(chunk_errors, cfg.M, cfg.workers)
    rows = []
    for k, (spec, _, _) in enumerate(coarse):
        ms = np.mean(errs[:, k, : spec.grid.N + 1], axis=0)
        rows.append([spec.grid.N, spec.tau, float(np.sqrt(np.max(ms)))])
    return _fit_or_flag([(r[1], r[2]) for r in rows]), Table(["N", "tau", "err_state"], rows)


def run_space_rate(cfg: ExperimentConfig) -> tuple[RateResult, Table]:
    """L^2 error of the optimal feedback control on nested meshes against a fine-mesh reference.

    All meshes share the time grid with ``max(N)`` steps and the same paths.
    The error is sqrt(tau sum_n E||U_h(t_n) - U_ref(t_n)||^2), with coarse
    controls interpolated onto the reference mesh.
    """
    sizes = sorted(cfg.n_elements)
    if len(sizes) < 3:
        raise ValueError("need at least 3 mesh sizes")
    if any(cfg.n_elements_ref % n for n in sizes) or cfg.n_elements_ref < 4 * sizes[-1]:
        raise ValueError(
            f"meshes must be nested in the reference mesh of {cfg.n_elements_ref} elements, "
            "which must be at least 4x the finest mesh"
        )
    N = max(cfg.N)
    ref = make_problem(cfg, cfg.n_elements_ref, N)
    P_ref, eta_ref = _feedback_solution(ref, cfg.scheme)
    levels = []
    for n in sizes:
        spec = make_problem(cfg, n, N)
        levels.append((spec, *_feedback_solution(spec, cfg.scheme)))
    fspace = ref.space
    deterministic = cfg.beta == 0 and cfg.sigma.strip() == "zero"
    M = 1 if deterministic else cfg.M

    def chunk_errors(idx: np.ndarray) -> np.ndarray:
        inc = sample_increments(ref.grid, cfg.seed, idx)
        X_ref, U_ref = simulate_feedback_batch(P_ref, eta_ref, ref, inc)
        out = np.empty((len(idx), len(levels), 2))
        for k, (spec, P, eta) in enumerate(levels):
            X, U = simulate_feedback_batch(P, eta, spec, inc)
            U_fine = fspace.to_spectral(_prolong_spectral(spec.space, fspace, U))
            X_fine = fspace.to_spectral(_prolong_spectral(spec.space, fspace, X))
            out[:, k, 0] = spec.tau * np.sum((U_fine - U_ref) ** 2, axis=(1, 2))
            out[:, k, 1] = np.max(np.sum((X_fine - X_ref) ** 2, axis=2), axis=1)
        return out

    errs = map_chunks(chunk_errors, M, cfg.workers)
    mean = np.mean(errs, axis=0)
    rows = [[spec.space.mesh.n_elements, spec.space.mesh.h, float(np.sqrt(mean[k, 0])),
             float(np.sqrt(mean[k, 1]))] for k, (spec, _, _) in enumerate(levels)]
    return _fit_or_flag([(r[1], r[2]) for r in rows]), Table(["n_elements", "h", "err_control", "err_state"], rows)


def _prolong_spectral(coarse: FemSpace, fine: FemSpace, coeffs: np.ndarray) -> np.ndarray:
    return prolong(coarse, fine, coarse.to_nodal(coeffs))


def run_compare_open_closed(cfg: ExperimentConfig) -> Table:
    """Exact cost of the gradient-descent optimum against the Monte-Carlo cost of the feedback law.

    Paths are drawn once on the finest grid and coarsened for the other step
    sizes, so the Monte-Carlo errors of the different rows are strongly correlated.
    """
    if cfg.beta != 0:
        raise ValueError("the open/closed comparison needs beta = 0")
    Ns = sorted(cfg.N)
    finest = TimeGrid(cfg.T, Ns[-1])
    if any(Ns[-1] % N for N in Ns):
        raise ValueError(f"every N must divide the finest N={Ns[-1]}")
    rows = []
    for N in Ns:
        spec = make_problem(cfg, cfg.n_elements[0], N)
        kappa = kappa_bound(spec) if cfg.kappa is None else cfg.kappa
        _, report = gd_run(spec, GdConfig(kappa, cfg.max_iters, cfg.tol))
        P, eta = _feedback_solution(spec, cfg.scheme)

        def chunk_costs(idx: np.ndarray, spec=spec, P=P, eta=eta) -> np.ndarray:
            inc = coarsen_increments(sample_increments(finest, cfg.seed, idx), finest.N // spec.grid.N)
            X, U = simulate_feedback_batch(P, eta, spec, inc)
            return path_costs(X, U, spec.tau, spec.alpha)

        fb = summarize(map_chunks(chunk_costs, cfg.M, cfg.workers))
        rows.append([N, spec.tau, report.final_cost, fb.mean, fb.std_error, fb.mean - report.final_cost,
                     report.iterations_run, int(report.converged)])
    return Table(["N", "tau", "gd_cost", "feedback_cost", "feedback_std_error", "gap", "gd_iterations",
                  "gd_converged"], rows)


def run_gd(cfg: ExperimentConfig) -> Table:
    """Gradient-descent history: exact for beta = 0, regressed Monte Carlo otherwise."""
    spec = make_problem(cfg, cfg.n_elements[0], cfg.N[0])
    kappa = kappa_bound(spec) if cfg.kappa is None else cfg.kappa
    gd = GdConfig(kappa, cfg.max_iters, cfg.tol)
    if cfg.beta == 0:
        _, report = gd_run(spec, gd)
    else:
        _, report = gd_run_mc(spec, gd, R=cfg.R, M=cfg.M, master_seed=cfg.seed)
    rows = [[i + 1, d, c] for i, (d, c) in enumerate(zip(report.distances, report.costs))]
    return Table(["iter", "distance", "cost"], rows)


def regress_benchmark(M: int, seed: int, R: int | None = None) -> tuple[int, float, float]:
    """Partition estimate of E[y | x] for y = sin(2 pi x1) + x2^2 + noise on the unit square."""
    rng = np.random.Generator(np.random.Philox(key=[seed, M]))
    xs = rng.random((M, 2))
    truth = np.sin(2 * math.pi * xs[:, 0]) + xs[:, 1] ** 2
    ys = truth + 0.3 * rng.standard_normal(M)
    R = default_cells(M) if R is None else R
    fitted = regress(xs, ys, R)
    return R, float(np.mean((fitted - truth) ** 2)), float(np.mean((fitted - ys) ** 2))


def run_regress_demo(cfg: ExperimentConfig) -> Table:
    rows = []
    for k in range(4):
        M = cfg.regression_M * 2**k
        R, mse_truth, mse_sample = regress_benchmark(M, cfg.seed, cfg.R)
        rows.append([M, R, mse_truth, mse_sample])
    return Table(["M", "R", "mse_truth", "mse_in_sample"], rows)
