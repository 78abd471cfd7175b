import numpy as np
import pytest

from slqheat.fem import FemFunction, assemble_space
from slqheat.problem import ProblemSpec
from slqheat.riccati import (
    DiagonalOp,
    brute_force_lq_value,
    riccati_step_dense,
    riccati_step_diag,
    scalar_riccati,
    solve_eta,
    solve_riccati,
    solve_riccati_ode_reference,
    solve_riccati_v1,
    solve_riccati_v2,
)
from slqheat.stochastics import TimeGrid

from conftest import modulated, sine


def one_mode_v1(lam, tau, beta, alpha):
    a0 = 1 / (1 + tau * lam - tau * beta**2 / 2)
    q = a0 * a0 * alpha
    return q + tau - tau * q * q / (1 + tau * q)


def one_mode_v2(lam, tau, beta, alpha):
    a0 = 1 / (1 + tau * lam)
    c = 1 + beta**2 * tau / 2
    q = a0 * a0 * alpha
    return c * c * q + tau - tau * (c * q) ** 2 / (1 + tau * q)


def test_v1_single_step_by_hand():
    sp = assemble_space(0, 1, 2)  # lambda = 12
    P = solve_riccati_v1(sp, TimeGrid(0.1, 1), beta=1.5, alpha=2.0)
    assert P.diag[0, 0] == pytest.approx(one_mode_v1(12.0, 0.1, 1.5, 2.0), rel=1e-14)
    assert P.diag[0, 0] == pytest.approx(0.5388220370941753, rel=1e-12)


def test_v2_single_step_by_hand():
    sp = assemble_space(0, 1, 2)
    P = solve_riccati_v2(sp, TimeGrid(0.1, 1), beta=1.5, alpha=2.0)
    assert P.diag[0, 0] == pytest.approx(one_mode_v2(12.0, 0.1, 1.5, 2.0), rel=1e-14)
    assert P.diag[0, 0] == pytest.approx(0.5911334325396825, rel=1e-12)


@pytest.mark.parametrize("scheme", ["V1", "V2"])
def test_zero_terminal_weight_gives_tau_at_last_step(scheme):
    sp = assemble_space(0, 1, 6)
    P = solve_riccati(scheme, sp, TimeGrid(1.0, 8), beta=0.3, alpha=0.0)
    np.testing.assert_allclose(P.diag[-2], 0.125)
    np.testing.assert_allclose(P.matrix(7), 0.125 * np.eye(5), atol=1e-15)
    assert np.all(P.diag[-1] == 0.0)


def test_schemes_coincide_without_noise():
    sp = assemble_space(0, 1, 10)
    g = TimeGrid(1.0, 32)
    np.testing.assert_allclose(solve_riccati_v1(sp, g, 0, 1.3).diag, solve_riccati_v2(sp, g, 0, 1.3).diag, atol=1e-12)


def test_v1_guard_names_mode_and_alternatives():
    sp = assemble_space(0, 1, 4)
    with pytest.raises(ValueError, match=r"lambda_1.*smaller tau or scheme V2"):
        solve_riccati_v1(sp, TimeGrid(1.0, 2), beta=10.0, alpha=1.0)


def test_v2_runs_for_large_beta():
    P = solve_riccati_v2(assemble_space(0, 1, 4), TimeGrid(1.0, 2), beta=10.0, alpha=1.0)
    assert np.all(np.isfinite(P.diag)) and np.all(P.diag >= 0)


def test_unknown_scheme_and_negative_alpha():
    sp = assemble_space(0, 1, 4)
    with pytest.raises(ValueError):
        solve_riccati("V3", sp, TimeGrid(1.0, 2), 0, 1)
    with pytest.raises(ValueError):
        solve_riccati_v2(sp, TimeGrid(1.0, 2), 0, -1)


@pytest.mark.parametrize("scheme", ["V1", "V2"])
def test_dense_matches_diagonal_and_is_symmetric(scheme):
    sp = assemble_space(0, 1, 33)
    P = solve_riccati(scheme, sp, TimeGrid(1.0, 40), beta=1.0, alpha=0.7)
    assert P.dense is not None
    for n in range(41):
        assert np.max(np.abs(P.dense[n] - np.diag(P.diag[n]))) <= 1e-10
        assert np.max(np.abs(P.dense[n] - P.dense[n].T)) <= 1e-12
    assert np.all(P.diag >= -1e-12)
    np.testing.assert_allclose(P.diag[-1], 0.7)


def test_dense_step_on_non_diagonal_input(rng):
    """The dense step is the general matrix recursion, not just a diagonal one."""
    B = rng.normal(size=(4, 4))
    p_next = B @ B.T
    A = np.diag(rng.uniform(0.2, 0.9, 4))
    tau, g = 0.1, 1.05
    Q = A @ p_next @ A
    expected = g * g * Q + tau * np.eye(4) - tau * (g * Q) @ np.linalg.inv(np.eye(4) + tau * Q) @ (g * Q)
    np.testing.assert_allclose(riccati_step_dense(A, p_next, tau, g), expected, atol=1e-12)
    d = rng.uniform(0, 2, 4)
    np.testing.assert_allclose(riccati_step_dense(A, np.diag(d), tau, g),
                               np.diag(riccati_step_diag(np.diag(A), d, tau, g)), atol=1e-14)


def test_dense_skipped_above_limit():
    P = solve_riccati_v2(assemble_space(0, 1, 80), TimeGrid(1.0, 4), 0.5, 1.0)
    assert P.dense is None
    np.testing.assert_allclose(P.matrix(0), np.diag(P.diag[0]))


@pytest.mark.parametrize("scheme", ["V1", "V2"])
def test_value_function_identity(scheme, rng):
    for dim, N in [(1, 2), (2, 3), (3, 4)]:
        sp = assemble_space(0, 1, dim + 1)
        g = TimeGrid(0.8, N)
        P = solve_riccati(scheme, sp, g, beta=0.9, alpha=1.7)
        for _ in range(5):
            l = int(rng.integers(0, N))
            z = rng.normal(size=dim)
            lhs = 2 * brute_force_lq_value(sp, g, 0.9, 1.7, l, FemFunction(sp, z), scheme)
            rhs = P.quadratic_form(l, z)
            assert abs(lhs - rhs) <= 1e-8 * abs(rhs)


def test_brute_force_size_guard():
    sp = assemble_space(0, 1, 10)
    with pytest.raises(ValueError):
        brute_force_lq_value(sp, TimeGrid(1.0, 10), 0, 1, 0, np.ones(9), "V2")


def test_uniform_bound_as_tau_halves():
    sp = assemble_space(0, 1, 12)
    peaks = [solve_riccati_v2(sp, TimeGrid(1.0, N), 1.0, 1.0).diag.max() for N in (16, 32, 64, 128, 256, 512)]
    assert all(b <= a + 1e-6 for a, b in zip(peaks, peaks[1:]))


@pytest.mark.parametrize("alpha", [0.0, 0.5, 3.0])
def test_mode_monotonicity(alpha):
    P = solve_riccati_v2(assemble_space(0, 1, 16), TimeGrid(1.0, 32), 0.8, alpha)
    assert np.all(np.diff(P.diag, axis=1) <= 1e-15)


def test_ode_stationary_root():
    lam, beta = np.array([2.0, 9.0, 40.0]), 1.2
    a = lam - beta**2 / 2
    root = -a + np.sqrt(a * a + 1)
    for i in range(3):
        for t in (0.0, 0.3, 1.0):
            assert scalar_riccati(lam[i], beta, root[i], 1.0, t) == pytest.approx(root[i], abs=1e-10)


def test_ode_near_terminal_time():
    for eps in (1e-3, 1e-4):
        p = scalar_riccati(np.array([5.0]), 0.5, 0.0, 1.0, 1.0 - eps)[0]
        assert abs(p - eps) <= 10 * eps**2


def test_ode_solves_the_equation():
    lam, beta, alpha, T = 7.0, 0.8, 1.3, 1.0
    t = np.linspace(0.05, 0.95, 7)
    d = 1e-6
    p = scalar_riccati(lam, beta, alpha, T, t)
    dp = (scalar_riccati(lam, beta, alpha, T, t + d) - scalar_riccati(lam, beta, alpha, T, t - d)) / (2 * d)
    np.testing.assert_allclose(dp, p * p + (2 * lam - beta**2) * p - 1, rtol=1e-6)
    assert scalar_riccati(lam, beta, alpha, T, T) == pytest.approx(alpha)


def test_ode_reference_interface():
    sp = assemble_space(0, 1, 5)
    ops = solve_riccati_ode_reference(sp, 1.0, 1.0, 1.0, [0.0, 1.0])
    assert isinstance(ops[0], DiagonalOp)
    np.testing.assert_allclose(ops[1].entries, 1.0)
    with pytest.raises(ValueError):
        solve_riccati_ode_reference(sp, 1.0, 1.0, 1.0, [1.5])


def test_v2_first_mode_close_to_ode():
    sp = assemble_space(0, 1, 9)
    P = solve_riccati_v2(sp, TimeGrid(1.0, 4096), 1.0, 1.0)
    ref = scalar_riccati(sp.eigenvalues, 1.0, 1.0, 1.0, 0.0)
    assert abs(P.diag[0, 0] - ref[0]) / ref[0] < 5e-3
    # relative errors grow like tau * lambda_i across the spectrum
    rel = np.abs(P.diag[0] - ref) / ref
    assert np.all(rel < 2 * sp.eigenvalues / 4096)


def test_eta_vanishes_without_noise_or_coupling():
    sp = assemble_space(0, 1, 6)
    g = TimeGrid(1.0, 8)
    spec = ProblemSpec(sp, g, 0.7, 1.0, x0=sine(1))
    assert np.all(solve_eta(solve_riccati_v2(sp, g, 0.7, 1.0), spec).eta == 0)
    spec0 = ProblemSpec(sp, g, 0.0, 1.0, x0=sine(1), sigma=modulated)
    assert np.all(solve_eta(solve_riccati_v2(sp, g, 0.0, 1.0), spec0).eta == 0)


def test_eta_two_steps_by_hand():
    sp = assemble_space(0, 1, 2)
    g = TimeGrid(0.5, 2)
    beta, alpha = 0.6, 1.5
    spec = ProblemSpec(sp, g, beta, alpha, sigma=lambda t, x: (1 + t) * np.ones_like(x))
    P = solve_riccati_v2(sp, g, beta, alpha)
    eta = solve_eta(P, spec).eta[:, 0]
    s = spec.sigma_coeffs[:, 0]
    a, tau, p = 1 / (1 + 0.25 * 12), 0.25, P.diag[:, 0]
    eta1 = tau * a * beta * p[2] * s[2]
    eta0 = a * eta1 + tau * a * (-p[1] * eta1 + beta * p[1] * s[1])
    assert eta[2] == 0.0
    assert eta[1] == pytest.approx(eta1, rel=1e-14)
    assert eta[0] == pytest.approx(eta0, rel=1e-14)


def test_eta_rejects_mismatched_grid():
    sp = assemble_space(0, 1, 4)
    P = solve_riccati_v2(sp, TimeGrid(1.0, 4), 0.5, 1.0)
    with pytest.raises(ValueError):
        solve_eta(P, ProblemSpec(sp, TimeGrid(1.0, 8), 0.5, 1.0))
