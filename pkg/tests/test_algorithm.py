import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from consensus_pd import (
    AlgorithmState,
    ConsistencyError,
    ConstrainedProblem,
    CoreState,
    KktPoint,
    Network,
    NumericOverflowError,
    compute_optimal_equilibrium,
    distance_to_optimal_set,
    fit_linear_rate,
    from_core,
    kkt_residual,
    perturbation_signals,
    run,
    solve_kkt_oracle,
    squared_distance_agent,
    step_centralized,
    step_core,
    step_distributed,
    to_core,
)
from consensus_pd.algorithm import CSV_COLUMNS, fixed_point_residual
from consensus_pd.checks import brute_force_distance

from instances import desk_network, random_instance


def test_one_centralized_step_from_origin(desk):
    problem, _, _ = desk
    theta, lam = step_centralized(problem, 0.0, np.zeros(1), 0.05)
    # sum of gradients at 0 is -6; constraint value is -0.5
    assert theta == pytest.approx(0.3, abs=1e-15)
    np.testing.assert_array_equal(lam, [0.0])


def test_centralized_fixed_point_at_kkt(desk):
    problem, _, kkt = desk
    theta, lam = step_centralized(problem, kkt.theta_star, kkt.lambda_star, 0.05)
    assert abs(theta - 0.5) <= 1e-12
    assert np.max(np.abs(lam - 3.0)) <= 1e-12


def test_centralized_converges_to_desk_optimum(desk):
    problem, _, _ = desk
    theta, lam = 0.0, np.zeros(1)
    for _ in range(3000):
        theta, lam = step_centralized(problem, theta, lam, 0.05)
    assert theta == pytest.approx(0.5, abs=1e-8)
    assert lam[0] == pytest.approx(3.0, abs=1e-7)


def test_equilibrium_family_is_fixed(desk):
    problem, network, kkt = desk
    eq = compute_optimal_equilibrium(problem, network, kkt, 0.05)
    for c in (-10.0, 0.0, 0.3, 7.0):
        assert fixed_point_residual(problem, network, eq.point(network, c), 0.05) <= 1e-12


def test_equilibrium_z_perp_is_linear_in_stepsize(desk):
    problem, network, kkt = desk
    a = compute_optimal_equilibrium(problem, network, kkt, 0.05)
    b = compute_optimal_equilibrium(problem, network, kkt, 0.1)
    np.testing.assert_allclose(b.z_perp_star, 2 * a.z_perp_star, rtol=1e-13)


def test_inactive_constraint_gives_nonzero_correction():
    # constraint t <= 5 is slack, optimum t = 1, Phi = (2(1 - 0), 0, 2(1 - 2))
    problem = ConstrainedProblem([squared_distance_agent(0.0, p=[1.0], q=[-5.0]),
                                  squared_distance_agent(1.0), squared_distance_agent(2.0)])
    kkt = solve_kkt_oracle(problem)
    np.testing.assert_allclose(problem.phi(np.ones(3), kkt.lambda_star), [2.0, 0.0, -2.0])
    eq = compute_optimal_equilibrium(problem, desk_network(), kkt, 0.05)
    assert np.linalg.norm(eq.z_perp_star) > 0.1


def test_identical_agents_need_no_correction():
    problem = ConstrainedProblem([squared_distance_agent(1.0, p=[1.0], q=[-3.0])] * 3)
    kkt = solve_kkt_oracle(problem)
    eq = compute_optimal_equilibrium(problem, desk_network(), kkt, 0.05)
    np.testing.assert_allclose(eq.z_perp_star, 0.0, atol=1e-15)


def test_wrong_kkt_point_fails_consistency(desk):
    problem, network, kkt = desk
    bad = KktPoint(0.4, np.array([3.0]), (0,), (), 1, None)
    with pytest.raises(ConsistencyError):
        compute_optimal_equilibrium(problem, network, bad, 0.05)


def test_single_agent_without_network_reduces_to_centralized():
    problem = ConstrainedProblem([squared_distance_agent(2.0, p=[1.0], q=[-1.0])])
    net = Network.from_edges(1, [])
    state = AlgorithmState.initial([0.0], 1, z0=[0.7])
    nxt = step_distributed(problem, net, state, 0.1)
    theta, lam = step_centralized(problem, 0.0, np.zeros(1), 0.1)
    assert nxt.x[0] == theta and np.array_equal(nxt.lam, lam)
    assert nxt.z[0] == 0.7


def test_core_step_of_consensual_state_matches_centralized(desk):
    problem, network, kkt = desk
    eq = compute_optimal_equilibrium(problem, network, kkt, 0.05)
    core = CoreState(0.2, np.zeros(2), eq.z_perp_star.copy(), np.array([1.0]))
    nxt = step_core(problem, network, core, 0.05)
    theta, lam = step_centralized(problem, 0.2, np.array([1.0]), 0.05)
    assert nxt.x_m == pytest.approx(theta, abs=1e-15)
    np.testing.assert_allclose(nxt.lam, lam, atol=1e-15)
    w, d, _ = perturbation_signals(problem, network, core, eq)
    assert w == 0.0 and np.all(d == 0.0)


def test_velocity_signal_vanishes_at_optimum(desk):
    problem, network, kkt = desk
    eq = compute_optimal_equilibrium(problem, network, kkt, 0.05)
    _, _, v = perturbation_signals(problem, network, eq.core_point(), eq)
    np.testing.assert_array_equal(v, 0.0)


def test_core_round_trip(desk):
    _, network, _ = desk
    rng = np.random.default_rng(3)
    for _ in range(20):
        s = AlgorithmState(rng.standard_normal(3), rng.standard_normal(3), rng.random(1), 0)
        back = from_core(network, to_core(network, s), z_m=float(np.mean(s.z)))
        np.testing.assert_allclose(back.x, s.x, atol=1e-14)
        np.testing.assert_allclose(back.z, s.z, atol=1e-14)


def test_distance_zero_on_optimal_set_for_any_offset(desk):
    problem, network, kkt = desk
    eq = compute_optimal_equilibrium(problem, network, kkt, 0.05)
    for c in (-4.0, 0.0, 2.5):
        assert distance_to_optimal_set(eq.point(network, c), eq, network) <= 1e-14


def test_distance_matches_grid_search(desk):
    problem, network, kkt = desk
    eq = compute_optimal_equilibrium(problem, network, kkt, 0.05)
    rng = np.random.default_rng(5)
    for _ in range(10):
        s = AlgorithmState(rng.standard_normal(3), rng.standard_normal(3), rng.random(1), 0)
        assert abs(distance_to_optimal_set(s, eq, network) - brute_force_distance(s, eq, network)) <= 1e-6


def test_desk_run_converges_with_linear_tail(desk):
    problem, network, kkt = desk
    eq = compute_optimal_equilibrium(problem, network, kkt, 0.05)
    rec = run(problem, network, 0.05, AlgorithmState.initial(np.zeros(3), 1), 100000, eq=eq)
    assert rec.summary["stop_reason"] == "converged"
    assert rec.summary["final_dist"] <= 1e-8
    assert rec.summary["fitted_slope"] < 0 and rec.summary["fitted_r2"] >= 0.99
    assert len(rec.rows) == rec.summary["iterations"] + 1
    assert [r[0] for r in rec.rows] == list(range(len(rec.rows)))
    np.testing.assert_allclose(rec.final_state.x, 0.5, atol=1e-8)
    assert all(r[7] is None for r in rec.rows)


def test_oracle_free_stop_rule(desk):
    problem, network, _ = desk
    rec = run(problem, network, 0.05, AlgorithmState.initial(np.zeros(3), 1), 100000, stop_tol=1e-8)
    assert rec.summary["stop_reason"] == "converged"
    last = dict(zip(CSV_COLUMNS, rec.rows[-1]))
    assert last["dist"] is None
    assert last["kkt_stationarity"] + last["kkt_primal"] + last["kkt_comp"] + last["x_perp_norm"] <= 1e-8


def test_nonpositive_stepsize_and_negative_multiplier_rejected(desk):
    problem, network, _ = desk
    init = AlgorithmState.initial(np.zeros(3), 1)
    with pytest.raises(ValueError):
        run(problem, network, 0.0, init, 10)
    with pytest.raises(ValueError):
        step_distributed(problem, network, init, -1.0)
    with pytest.raises(ValueError):
        AlgorithmState.initial(np.zeros(3), 1, lam0=[-0.1])


def test_large_stepsize_reported_not_hidden(desk):
    problem, network, kkt = desk
    eq = compute_optimal_equilibrium(problem, network, kkt, 10.0)
    try:
        rec = run(problem, network, 10.0, AlgorithmState.initial(np.zeros(3), 1), 2000, eq=eq)
    except NumericOverflowError as exc:
        assert exc.iteration >= 0
    else:
        assert rec.summary["stop_reason"] == "max_iter"


def test_fit_linear_rate_recovers_geometric_decay():
    d = 3.0 * 0.9 ** np.arange(200)
    slope, rate, r2 = fit_linear_rate(d)
    assert rate == pytest.approx(0.9, rel=1e-12)
    assert r2 == pytest.approx(1.0)
    assert fit_linear_rate([1.0, 0.0, 0.0]) == (None, None, None)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_sum_of_z_and_dual_sign_preserved(seed):
    rng = np.random.default_rng(seed)
    problem, network = random_instance(rng)
    state = AlgorithmState(rng.standard_normal(problem.n), rng.standard_normal(problem.n),
                           rng.random(problem.m), 0)
    s0 = state.z.sum()
    for _ in range(200):
        state = step_distributed(problem, network, state, 0.02)
        assert np.all(state.lam >= 0)
    assert abs(state.z.sum() - s0) <= 1e-9 * (1 + abs(s0))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_fixed_point_iff_kkt(seed):
    rng = np.random.default_rng(seed)
    problem, network = random_instance(rng)
    kkt = solve_kkt_oracle(problem)
    eq = compute_optimal_equilibrium(problem, network, kkt, 0.05)
    state = eq.point(network, rng.standard_normal())
    assert fixed_point_residual(problem, network, state, 0.05) <= 1e-12
    core = to_core(network, state)
    assert kkt_residual(problem, core.x_m, state.lam).max() <= 1e-8
    # perturbing the multiplier breaks both properties
    moved = AlgorithmState(state.x, state.z, state.lam + 0.5, 0)
    assert fixed_point_residual(problem, network, moved, 0.05) > 1e-6


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_distance_sandwich(seed):
    rng = np.random.default_rng(seed)
    problem, network = random_instance(rng)
    kkt = solve_kkt_oracle(problem)
    eq = compute_optimal_equilibrium(problem, network, kkt, 0.05)
    s = AlgorithmState(rng.standard_normal(problem.n), rng.standard_normal(problem.n),
                       rng.random(problem.m), 0)
    core = to_core(network, s)
    err = math.sqrt((core.x_m - eq.theta_star) ** 2 + np.sum(core.x_perp ** 2)
                    + np.sum((core.z_perp - eq.z_perp_star) ** 2) + np.sum((s.lam - eq.lambda_star) ** 2))
    d = distance_to_optimal_set(s, eq, network)
    assert err <= d + 1e-12
    assert d <= math.sqrt(problem.n) * err + 1e-12
