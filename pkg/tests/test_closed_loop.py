import dataclasses

import numpy as np
import pytest

from slqheat.closed_loop import (
    TrajectoryPair,
    evaluate_discrete_cost,
    path_costs,
    simulate_feedback,
    simulate_feedback_batch,
    simulate_forward_given_control,
    summarize,
)
from slqheat.fem import assemble_space
from slqheat.problem import ProblemSpec
from slqheat.riccati import EtaSequence, solve_eta, solve_riccati_v2
from slqheat.stochastics import BrownianPath, SeedSpec, TimeGrid, sample_increments, sample_path

from conftest import bump, modulated, sine


def feedback_setup(spec):
    P = solve_riccati_v2(spec.space, spec.grid, spec.beta, spec.alpha)
    return P, solve_eta(P, spec)


def test_zero_data_gives_zero_trajectory():
    spec = ProblemSpec(assemble_space(0, 1, 6), TimeGrid(1.0, 8), 0.5, 1.0)
    P, eta = feedback_setup(spec)
    tr = simulate_feedback(P, eta, spec, sample_path(spec.grid, SeedSpec(1, 0)))
    assert np.all(tr.X == 0) and np.all(tr.U == 0)
    X = simulate_forward_given_control(np.zeros((8, 5)), spec, sample_path(spec.grid, SeedSpec(1, 0)))
    assert np.all(X == 0)


def test_deterministic_mode_recursion():
    sp = assemble_space(0, 1, 8)
    k = 2
    spec = ProblemSpec(sp, TimeGrid(1.0, 10), 0.0, 0.0, x0=lambda x: sp.evaluate(np.eye(sp.dim)[k], x))
    P, eta = feedback_setup(spec)
    tr = simulate_feedback(P, eta, spec, sample_path(spec.grid, SeedSpec(0, 0)))
    a0, tau = 1 / (1 + spec.tau * sp.eigenvalues[k]), spec.tau
    x = 1.0
    for n in range(10):
        assert tr.X[n, k] == pytest.approx(x, abs=1e-12)
        assert tr.U[n, k] == pytest.approx(-P.diag[n + 1, k] * x, abs=1e-12)
        x = a0 * (1 - tau * P.diag[n + 1, k]) * x
    assert np.max(np.abs(np.delete(tr.X, k, axis=1))) < 1e-12


def test_uncontrolled_state_by_direct_summation():
    sp = assemble_space(0, 1, 5)
    spec = ProblemSpec(sp, TimeGrid(1.0, 4), 0.0, 1.0, x0=bump, sigma=modulated)
    P, eta = feedback_setup(spec)
    P0 = dataclasses.replace(P, diag=np.zeros_like(P.diag), dense=None)
    path = sample_path(spec.grid, SeedSpec(4, 4))
    tr = simulate_feedback(P0, EtaSequence(np.zeros_like(eta.eta)), spec, path)
    a, x, s, dw = spec.step_factors, spec.x0_coeffs, spec.sigma_coeffs, path.increments
    for n in range(5):
        direct = a**n * x + sum(a ** (n - k) * s[k] * dw[k] for k in range(n))
        np.testing.assert_allclose(tr.X[n], direct, atol=1e-12)


def test_forward_stepper_single_step_by_hand():
    sp = assemble_space(0, 1, 2)  # lambda = 12
    spec = ProblemSpec(sp, TimeGrid(0.5, 1), 0.8, 0.0, x0=lambda x: 3 * sp.evaluate([1.0], x),
                       sigma=lambda t, x: 2 * sp.evaluate([1.0], x))
    X = simulate_forward_given_control(np.array([[0.4]]), spec, np.array([0.3]))
    assert X[1, 0] == pytest.approx((3 + 0.5 * 0.4 + (0.8 * 3 + 2) * 0.3) / (1 + 0.5 * 12), rel=1e-12)


def test_forward_stepper_input_validation(small_spec):
    with pytest.raises(ValueError):
        simulate_forward_given_control(np.zeros((4, 3)), small_spec, np.zeros(5))
    with pytest.raises(ValueError):
        simulate_forward_given_control(np.zeros((5, 3)), small_spec, np.zeros(4))


def test_feedback_dimension_mismatch(small_spec):
    P, eta = feedback_setup(small_spec)
    other = ProblemSpec(assemble_space(0, 1, 6), small_spec.grid, 0.0, 1.0)
    with pytest.raises(ValueError):
        simulate_feedback_batch(P, eta, other, np.zeros((1, 5)))
    with pytest.raises(ValueError):
        simulate_feedback(P, eta, small_spec, sample_path(TimeGrid(1.0, 4), SeedSpec(0, 0)))


@pytest.mark.parametrize("beta", [0.0, 0.8])
def test_steppers_agree_up_to_rounding(beta):
    """Solving the semi-implicit step for X_{n+1} gives A0 (X_n + tau U_n + noise): the feedback scheme."""
    spec = ProblemSpec(assemble_space(0, 1, 8), TimeGrid(1.0, 32), beta, 1.0, x0=bump, sigma=modulated)
    P, eta = feedback_setup(spec)
    inc = sample_increments(spec.grid, 2, range(200))
    X_fb, U = simulate_feedback_batch(P, eta, spec, inc)
    X_ol = simulate_forward_given_control(U, spec, inc)
    assert np.max(np.abs(X_fb - X_ol)) <= 1e-13 * max(1.0, np.max(np.abs(X_fb)))


def test_costs_of_zero_trajectories():
    g = TimeGrid(1.0, 4)
    path = BrownianPath(g, np.zeros(4))
    trs = [TrajectoryPair(np.zeros((5, 2)), np.zeros((4, 2)), path)] * 3
    est = evaluate_discrete_cost(trs, 1.0)
    assert est.mean == 0 and est.std_error == 0 and est.n_paths == 3
    with pytest.raises(ValueError):
        evaluate_discrete_cost([], 1.0)


def test_deterministic_cost_by_hand():
    sp = assemble_space(0, 1, 2)
    spec = ProblemSpec(sp, TimeGrid(1.0, 2), 0.0, 2.0, x0=lambda x: sp.evaluate([1.0], x))
    P, eta = feedback_setup(spec)
    tr = simulate_feedback(P, eta, spec, sample_path(spec.grid, SeedSpec(0, 0)))
    est = evaluate_discrete_cost([tr], 2.0)
    a, tau, p = 1 / 7, 0.5, P.diag[:, 0]
    x0 = 1.0
    u0 = -p[1] * x0
    x1 = a * x0 + tau * a * u0
    u1 = -p[2] * x1
    x2 = a * x1 + tau * a * u1
    hand = 0.5 * (tau * (x0**2 + x1**2) + tau * (u0**2 + u1**2)) + 0.5 * 2.0 * x2**2
    assert est.std_error == 0
    assert est.mean == pytest.approx(hand, rel=1e-13)
    right = summarize(path_costs(tr.X, tr.U, tau, 2.0, "right")).mean
    assert right == pytest.approx(hand + 0.5 * tau * (x2**2 - x0**2), rel=1e-13)
    with pytest.raises(ValueError):
        path_costs(tr.X, tr.U, tau, 2.0, "middle")


def test_std_error_shrinks_with_ensemble_size():
    spec = ProblemSpec(assemble_space(0, 1, 6), TimeGrid(1.0, 16), 0.5, 1.0, x0=sine(1), sigma=modulated)
    P, eta = feedback_setup(spec)
    inc = sample_increments(spec.grid, 3, range(8000))
    X, U = simulate_feedback_batch(P, eta, spec, inc)
    costs = path_costs(X, U, spec.tau, spec.alpha)
    ratio = summarize(costs).std_error / summarize(costs[:4000]).std_error
    assert abs(ratio - 1 / np.sqrt(2)) < 0.2 / np.sqrt(2)


def test_summarize_single_sample_and_compensation():
    assert summarize([2.5]).std_error == 0.0
    big = np.array([1e16, 1.0, -1e16, 1.0])
    assert summarize(big).mean == 0.5


def test_state_map_is_linear(rng):
    sp = assemble_space(0, 1, 6)
    g = TimeGrid(1.0, 6)
    inc = sample_increments(g, 9, range(3))
    parts = [(sine(1), lambda t, x: x * (1 - x), rng.normal(size=(6, 5))),
             (bump, modulated, rng.normal(size=(6, 5)))]
    outs = []
    for x0, sig, U in parts:
        outs.append(simulate_forward_given_control(U, ProblemSpec(sp, g, 0.6, 1.0, x0=x0, sigma=sig), inc))
    both = ProblemSpec(sp, g, 0.6, 1.0, x0=lambda x: sine(1)(x) + bump(x),
                       sigma=lambda t, x: x * (1 - x) + modulated(t, x))
    total = simulate_forward_given_control(parts[0][2] + parts[1][2], both, inc)
    np.testing.assert_allclose(total, outs[0] + outs[1], atol=1e-12)


def test_path_independent_without_noise():
    spec = ProblemSpec(assemble_space(0, 1, 6), TimeGrid(1.0, 8), 0.0, 1.0, x0=bump)
    P, eta = feedback_setup(spec)
    a = simulate_feedback(P, eta, spec, sample_path(spec.grid, SeedSpec(1, 0)))
    b = simulate_feedback(P, eta, spec, sample_path(spec.grid, SeedSpec(2, 5)))
    assert np.array_equal(a.X, b.X) and np.array_equal(a.U, b.U)


def test_feedback_beats_perturbed_controls(rng):
    spec = ProblemSpec(assemble_space(0, 1, 6), TimeGrid(1.0, 16), 0.5, 1.0, x0=sine(1), sigma=modulated)
    P, eta = feedback_setup(spec)
    inc = sample_increments(spec.grid, 5, range(4000))
    X, U = simulate_feedback_batch(P, eta, spec, inc)
    base = path_costs(X, U, spec.tau, spec.alpha)
    for _ in range(5):
        delta = 0.05 * rng.normal(size=(16, 5))
        Xp, Up = simulate_feedback_batch(P, eta, spec, inc, offset=delta)
        pert = path_costs(Xp, Up, spec.tau, spec.alpha)
        se = np.hypot(summarize(base).std_error, summarize(pert).std_error)
        assert pert.mean() >= base.mean() - 3 * se
