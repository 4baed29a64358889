"""
Random instances and a stepsize sweep
=====================================

Random quadratic costs with affine constraints on random connected graphs.
For each instance the practical convergence rate is fitted at a few
stepsizes; too large a stepsize stalls or diverges.
"""

import numpy as np

from consensus_pd import (
    AlgorithmState,
    AssumptionViolation,
    ConstrainedProblem,
    Network,
    NumericOverflowError,
    QuadraticAgentProblem,
    compute_optimal_equilibrium,
    run,
    solve_kkt_oracle,
)

rng = np.random.default_rng(2024)


def random_problem(n):
    agents = []
    for i in range(n):
        a = rng.uniform(0.5, 3.0)
        center = rng.uniform(-2, 2)
        # about half of the agents get an upper bound near their own target
        if rng.random() < 0.5:
            agents.append(QuadraticAgentProblem(a, -a * center, p=[1.0], q=[-(center + rng.uniform(-1, 1))]))
        else:
            agents.append(QuadraticAgentProblem(a, -a * center))
    return ConstrainedProblem(agents)


def random_graph(n):
    # a random spanning tree plus a few extra edges keeps the graph connected
    edges = [(int(rng.integers(0, i)), i, 1.0) for i in range(1, n)]
    for _ in range(n):
        i, j = rng.choice(n, 2, replace=False)
        if i != j and not any({i, j} == {a, b} for a, b, _ in edges):
            edges.append((int(i), int(j), 1.0))
    return Network.from_edges(n, edges, normalize=True)


for trial in range(4):
    n = int(rng.integers(3, 7))
    problem = random_problem(n)
    try:
        kkt = solve_kkt_oracle(problem)
    except AssumptionViolation as exc:
        print("trial %d: %s" % (trial, exc))
        continue
    network = random_graph(n)
    print("trial %d: n = %d, m = %d, theta* = %.4f, active = %s"
          % (trial, n, problem.m, kkt.theta_star, kkt.active_set))
    for gamma in (0.005, 0.02, 0.08, 0.5):
        eq = compute_optimal_equilibrium(problem, network, kkt, gamma)
        try:
            rec = run(problem, network, gamma, AlgorithmState.initial(np.zeros(n), problem.m), 20000, eq=eq)
            s = rec.summary
            rate = "n/a" if s["fitted_rate"] is None else "%.5f" % s["fitted_rate"]
            print("  gamma %.3f: %-9s after %5d steps, rate %s" % (gamma, s["stop_reason"], s["iterations"], rate))
        except NumericOverflowError as exc:
            print("  gamma %.3f: diverged at step %d" % (gamma, exc.iteration))
