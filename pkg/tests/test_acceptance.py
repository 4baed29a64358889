"""Acceptance gate: every criterion at its stated tolerance, one PASS/FAIL line each."""

import math
import time

import numpy as np
import pytest

from consensus_pd import (
    AlgorithmState,
    Certificate,
    ConstrainedProblem,
    Network,
    compute_optimal_equilibrium,
    grid_bisection_minimizer,
    monitor_descent,
    rate_certificate,
    run,
    solve_kkt_oracle,
    squared_distance_agent,
)
from consensus_pd import checks
from consensus_pd.algorithm import fixed_point_residual

from instances import desk_box, random_instance


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})")
        assert ok, detail
    return emit


@pytest.fixture(scope="module")
def certified_run(request):
    """One trajectory of 10^4 steps at half the certified bound from a corner of the box."""
    desk = request.getfixturevalue("desk")
    ledger = request.getfixturevalue("desk_ledger")
    problem, network, kkt = desk
    gamma = ledger.values["gammabar0"] / 2
    eq = compute_optimal_equilibrium(problem, network, kkt, gamma)
    cert = Certificate(problem, network, ledger, eq, gamma)
    x0 = desk_box().hi[:3]
    assert desk_box().contains(x0, np.zeros(3), np.zeros(1))
    rec = run(problem, network, gamma, AlgorithmState.initial(x0, 1), 10000, stop_tol=0.0, eq=eq,
              record_states=True)
    return cert, rec, monitor_descent(rec.states, cert)


def _random_instances(seed, count):
    rng = np.random.default_rng(seed)
    return [random_instance(rng) for _ in range(count)]


def test_criterion_01_fixed_point_kkt_equivalence(report):
    start = time.perf_counter()
    worst = 0.0
    for problem, network in _random_instances(101, 20):
        assert problem.n <= 5 and problem.m <= 3
        kkt = solve_kkt_oracle(problem)
        eq = compute_optimal_equilibrium(problem, network, kkt, 0.05)
        for c in (0.0, 1.3):
            worst = max(worst, fixed_point_residual(problem, network, eq.point(network, c), 0.05))
    elapsed = time.perf_counter() - start
    report(1, "equilibrium is a fixed point", worst <= 1e-12 and elapsed < 5,
           f"max residual {worst:.2e} <= 1e-12, {elapsed:.2f} s < 5 s")


def test_criterion_02_oracle_equivalence(report):
    start = time.perf_counter()
    dt = dl = 0.0
    for problem, _ in _random_instances(202, 20):
        kkt = solve_kkt_oracle(problem)
        theta, lam = grid_bisection_minimizer(problem)
        dt = max(dt, abs(theta - kkt.theta_star))
        dl = max(dl, float(np.max(np.abs(lam - kkt.lambda_star), initial=0.0)))
    elapsed = time.perf_counter() - start
    report(2, "active-set and grid oracles agree", dt <= 1e-5 and dl <= 1e-4 and elapsed < 10,
           f"theta gap {dt:.2e} <= 1e-5, lambda gap {dl:.2e} <= 1e-4, {elapsed:.2f} s < 10 s")


def test_criterion_03_conservation(report, desk):
    problem, network, _ = desk
    start = time.perf_counter()
    res = checks.check_conservation(problem, network, 0.05, 100000, np.random.default_rng(3))
    elapsed = time.perf_counter() - start
    report(3, "sum and mean of z conserved", res.passed and elapsed < 5 and res.detail == "100000 steps",
           f"drift {res.value:.2e} <= {res.tolerance:.2e} over {res.detail}, {elapsed:.2f} s < 5 s")


def test_criterion_04_commutation_and_reconstruction(report, desk):
    problem, network, kkt = desk
    eq = compute_optimal_equilibrium(problem, network, kkt, 0.05)
    rng = np.random.default_rng(4)
    start = time.perf_counter()
    a = checks.check_commutation(problem, network, 0.05, rng, 1000)
    b = checks.check_reconstruction(problem, network, eq, 0.05, rng, 1000)
    elapsed = time.perf_counter() - start
    report(4, "core commutation and perturbation reconstruction", a.passed and b.passed and elapsed < 5,
           f"commutation {a.value:.2e}, reconstruction {b.value:.2e} <= 1e-12, {elapsed:.2f} s < 5 s")


def test_criterion_05_lyapunov_machinery(report, desk, desk_ledger):
    problem, network, kkt = desk
    rng = np.random.default_rng(5)
    start = time.perf_counter()
    lyap = checks.check_lyapunov(network)
    psand = checks.check_P_sandwich(network, rng, 10000)
    gamma = desk_ledger.values["gammabar0"] / 2
    eq = compute_optimal_equilibrium(problem, network, kkt, gamma)
    vsand = checks.check_Vopt_sandwich(problem, desk_ledger, gamma, eq, rng, 10000)
    elapsed = time.perf_counter() - start
    rho = float(np.max(np.abs(np.linalg.eigvals(network.A))))
    ok = lyap.passed and rho < 1 and psand.passed and vsand.passed and elapsed < 10
    report(5, "Lyapunov equation and sandwiches", ok,
           f"residual {lyap.value:.2e} <= 1e-10, rho(A) {rho:.4f} < 1, P gap {psand.value:.2e}, "
           f"V_opt gap {vsand.value:.2e}, {elapsed:.2f} s < 10 s")


def test_criterion_06_certified_descent(report, certified_run):
    cert, rec, mon = certified_run
    steps = mon.checked - 1
    ok = steps == 10000 and mon.left_omega == 0 and not mon.descent_violations
    report(6, "certified descent at half the bound", ok,
           f"gamma {cert.gamma:.3e}, {len(mon.descent_violations)} violations over {steps} steps, "
           f"{mon.left_omega} states outside the level set")


def test_criterion_07_exponential_envelope(report, certified_run):
    cert, rec, mon = certified_run
    ok = len(rec.rows) == 10001 and not mon.envelope_violations
    report(7, "exponential envelope", ok,
           f"{len(mon.envelope_violations)} violations over {len(rec.rows)} recorded t, "
           f"mu {cert.rate.mu!r}, log c {cert.rate.log_c:.3e}")


def test_criterion_08_rate_floor(report, desk_ledger):
    g0 = desk_ledger.values["gammabar0"]
    mus = [rate_certificate(desk_ledger, g).mu for g in (g0 / 2, g0 / 10, g0 / 100)]
    floor = math.sqrt(11 / 12)
    report(8, "rate floor", all(mu >= floor - 1e-9 for mu in mus),
           f"min mu {min(mus)!r} >= {floor:.6f}")


def test_criterion_09_practical_convergence(report, desk):
    problem, network, kkt = desk
    start = time.perf_counter()
    eq = compute_optimal_equilibrium(problem, network, kkt, 0.05)
    rec = run(problem, network, 0.05, AlgorithmState.initial(np.zeros(3), 1), 100000, eq=eq)
    elapsed = time.perf_counter() - start
    s = rec.summary
    ok = (s["final_dist"] <= 1e-6 and s["iterations"] <= 100000 and s["fitted_slope"] < 0
          and s["fitted_r2"] >= 0.99 and elapsed < 10)
    report(9, "practical convergence at gamma 0.05", ok,
           f"dist {s['final_dist']:.2e} after {s['iterations']} steps, slope {s['fitted_slope']:.3e}, "
           f"R^2 {s['fitted_r2']:.5f}, {elapsed:.2f} s < 10 s")


def test_criterion_10_centralized_reduction(report):
    problem = ConstrainedProblem([squared_distance_agent(2.0, p=[1.0], q=[-1.0])])
    network = Network.from_edges(1, [])
    res = checks.check_centralized_reduction(problem, network, 0.05, np.array([-1.0]), 1000)
    report(10, "single agent matches centralized", res.passed and "skipped" not in res.detail,
           f"max gap {res.value:.2e} <= 1e-15 over 1000 steps")


def test_criterion_11_distance_formula(report, desk):
    problem, network, kkt = desk
    eq = compute_optimal_equilibrium(problem, network, kkt, 0.05)
    res = checks.check_distance_formula(problem, network, eq, np.random.default_rng(11), 100)
    report(11, "closed-form distance", res.passed,
           f"grid gap {res.value:.2e} <= 1e-6 on 100 states, {res.detail}")
