"""Invariant checks used by the ``validate`` command.

Each check returns a ``CheckResult`` with the measured worst-case value and
the tolerance it was compared against.  All randomness comes from the
generator passed in.
"""

from dataclasses import dataclass
import math

import numpy as np

from .algorithm import (
    AlgorithmState,
    core_distance,
    distance_to_optimal_set,
    fixed_point_residual,
    perturbation_signals,
    perturbed_network_step,
    perturbed_optimization_step,
    run,
    step_centralized,
    step_core,
    step_distributed,
    to_core,
)
from .analysis import V_opt, monitor_descent


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def as_dict(self):
        return {"name": self.name, "passed": self.passed, "value": self.value,
                "tolerance": self.tolerance, "detail": self.detail}


def random_state(rng, problem, scale=2.0, lam_scale=3.0):
    n, m = problem.n, problem.m
    return AlgorithmState(scale * rng.standard_normal(n), scale * rng.standard_normal(n),
                          lam_scale * rng.random(m), 0)


def check_conservation(problem, network, gamma, steps, rng, step=None, tol=1e-9):
    """``1'z`` and ``z_m`` stay at their initial values.

    ``z0`` is drawn with a nonzero sum so that a corrupted update shows up.
    """
    step = step or step_distributed
    state = AlgorithmState(np.zeros(problem.n), rng.standard_normal(problem.n) + 1.0,
                           np.zeros(problem.m), 0)
    s0 = float(np.sum(state.z))
    bound = tol * (1 + abs(s0))
    worst_sum = worst_mean = 0.0
    for _ in range(steps):
        state = step(problem, network, state, gamma)
        s = float(state.z.sum())
        worst_sum = max(worst_sum, abs(s - s0))
        worst_mean = max(worst_mean, abs(s / problem.n - s0 / problem.n))
        if worst_sum > bound:
            break
    worst = max(worst_sum, worst_mean)
    return CheckResult("conservation", worst <= bound, worst, bound, f"{state.t} steps")


def check_fixed_point(problem, network, eq, gamma, tol=1e-12, offsets=(0.0, 1.0, -3.5)):
    worst = max(fixed_point_residual(problem, network, eq.point(network, c), gamma) for c in offsets)
    return CheckResult("fixed_point", worst <= tol, worst, tol)


def check_commutation(problem, network, gamma, rng, samples=1000, tol=1e-12):
    """Transform-then-core-step equals distributed-step-then-transform."""
    worst = 0.0
    for _ in range(samples):
        s = random_state(rng, problem)
        a = to_core(network, step_distributed(problem, network, s, gamma))
        b = step_core(problem, network, to_core(network, s), gamma)
        worst = max(worst, abs(a.x_m - b.x_m), _inf(a.x_perp - b.x_perp),
                    _inf(a.z_perp - b.z_perp), _inf(a.lam - b.lam))
    return CheckResult("commutation", worst <= tol, worst, tol)


def check_reconstruction(problem, network, eq, gamma, rng, samples=1000, tol=1e-12):
    """Perturbed optimization and network steps rebuild the core step."""
    worst = 0.0
    for _ in range(samples):
        core = to_core(network, random_state(rng, problem))
        ref = step_core(problem, network, core, gamma)
        w, d, v = perturbation_signals(problem, network, core, eq)
        x_m, lam = perturbed_optimization_step(problem, core.x_m, core.lam, w, d, gamma)
        xi = perturbed_network_step(problem, network, core.xi, v, eq, gamma)
        r = network.n - 1
        worst = max(worst, abs(x_m - ref.x_m), _inf(lam - ref.lam),
                    _inf(xi[:r] - ref.x_perp), _inf(xi[r:] - ref.z_perp))
    return CheckResult("reconstruction", worst <= tol, worst, tol)


def check_lyapunov(network, tol=1e-10):
    if network.n == 1:
        return CheckResult("lyapunov_residual", True, 0.0, tol, "n = 1: no network dynamics")
    A, P = network.A, network.P
    res = float(np.max(np.abs(A.T @ P @ A - P + np.eye(A.shape[0]))))
    rho = float(np.max(np.abs(np.linalg.eigvals(A))))
    return CheckResult("lyapunov_residual", res <= tol and rho < 1, res, tol, f"spectral radius {rho:.6f}")


def check_P_sandwich(network, rng, samples=10000, slack=1e-12):
    if network.n == 1:
        return CheckResult("P_sandwich", True, 0.0, slack, "n = 1")
    xi = rng.standard_normal((samples, network.A.shape[0]))
    q = np.einsum("ij,jk,ik->i", xi, network.P, xi)
    sq = np.sum(xi ** 2, axis=1)
    worst = float(max(np.max(network.c_l * sq - q), np.max(q - network.c_u * sq)) / np.max(sq))
    return CheckResult("P_sandwich", worst <= slack, worst, slack)


def check_Vopt_sandwich(problem, ledger, gamma, eq, rng, samples=10000, slack=1e-12):
    """Half and three halves of the squared error bracket ``V_opt`` on the ball."""
    kappa = ledger.values["kappa"]
    m = problem.m
    worst = -math.inf
    for _ in range(samples):
        e = rng.standard_normal(1 + m)
        e *= kappa * rng.random() ** (1 / (1 + m)) / np.linalg.norm(e)
        x_m = eq.theta_star + e[0]
        lam = eq.lambda_star + e[1:]
        grad = problem.constraint_slopes(problem.consensual(x_m))
        v = V_opt(ledger, gamma, x_m, lam, eq.theta_star, eq.lambda_star, grad)
        sq = float(e @ e)
        worst = max(worst, 0.5 * sq - v, v - 1.5 * sq)
    return CheckResult("Vopt_sandwich", worst <= slack, worst, slack)


def check_descent_and_envelope(problem, network, certificate, x0, steps):
    init = AlgorithmState.initial(x0, problem.m)
    rec = run(problem, network, certificate.gamma, init, steps, stop_tol=0.0, eq=certificate.eq,
              record_states=True)
    report = monitor_descent(rec.states, certificate)
    return [
        CheckResult("descent", not report.descent_violations, float(len(report.descent_violations)), 0.0,
                    f"{report.checked} states, {report.left_omega} outside the level set"),
        CheckResult("envelope", not report.envelope_violations, float(len(report.envelope_violations)), 0.0,
                    f"log c = {certificate.rate.log_c:.6g}, mu = {certificate.rate.mu!r}"),
    ]


def check_centralized_reduction(problem, network, gamma, x0, steps=1000, tol=1e-15):
    """For one agent the distributed and centralized iterations coincide."""
    if problem.n != 1:
        return CheckResult("centralized_reduction", True, 0.0, tol, "skipped: n > 1")
    state = AlgorithmState.initial(x0, problem.m)
    theta, lam = float(state.x[0]), state.lam.copy()
    worst = 0.0
    for _ in range(steps):
        state = step_distributed(problem, network, state, gamma)
        theta, lam = step_centralized(problem, theta, lam, gamma)
        worst = max(worst, abs(state.x[0] - theta), _inf(state.lam - lam))
    return CheckResult("centralized_reduction", worst <= tol, worst, tol)


def brute_force_distance(state, eq, network, half_width=5.0, step=1e-4):
    """Minimum over a grid of ``c`` of the distance to ``(1 theta*, z_e(c), lambda*)``."""
    z_m = float(np.mean(state.z))
    cs = z_m + np.arange(-half_width, half_width + step / 2, step)
    base = (np.sum((state.x - eq.theta_star) ** 2) + np.sum((state.lam - eq.lambda_star) ** 2))
    ze = network.S @ eq.z_perp_star
    diff = state.z[None, :] - ze[None, :] - cs[:, None]
    return float(np.sqrt(base + np.min(np.sum(diff ** 2, axis=1))))


def check_distance_formula(problem, network, eq, rng, samples=100, tol=1e-6):
    worst_gap = 0.0
    sandwich_ok = True
    for _ in range(samples):
        s = random_state(rng, problem)
        d = distance_to_optimal_set(s, eq, network)
        worst_gap = max(worst_gap, abs(d - brute_force_distance(s, eq, network)))
        e = core_distance(to_core(network, s), eq)
        sandwich_ok &= e <= d + 1e-12 and d <= math.sqrt(network.n) * e + 1e-12
    return CheckResult("distance_formula", worst_gap <= tol and sandwich_ok, worst_gap, tol,
                       "sandwich holds" if sandwich_ok else "sandwich violated")


def _inf(v):
    return float(np.max(np.abs(v), initial=0.0))
