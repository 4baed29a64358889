"""
Distributed iterates against the centralized primal-dual method
===============================================================

Removing the network (one agent holding the summed problem) leaves the
projected primal-dual gradient method on ``(theta, lambda)``.  Both are
started from the same average and multiplier; the distributed run also
has to remove the disagreement between agents, which shows up as an
initial transient.
"""

import math

import numpy as np

from consensus_pd import (
    AlgorithmState,
    ConstrainedProblem,
    Network,
    compute_optimal_equilibrium,
    distance_to_optimal_set,
    solve_kkt_oracle,
    squared_distance_agent,
    step_centralized,
    step_distributed,
)

problem = ConstrainedProblem([
    squared_distance_agent(0.0, p=[1.0], q=[-0.5]),
    squared_distance_agent(1.0),
    squared_distance_agent(2.0),
])
network = Network.preset("path", 3, 0.2)
kkt = solve_kkt_oracle(problem)
gamma = 0.05
eq = compute_optimal_equilibrium(problem, network, kkt, gamma)

state = AlgorithmState.initial([-1.0, 0.0, 1.0], 1)
theta, lam = float(np.mean(state.x)), state.lam.copy()
print("    t   dist distributed   dist centralized")
for t in range(1501):
    if t % 150 == 0:
        d_central = math.sqrt(problem.n * (theta - kkt.theta_star) ** 2 + np.sum((lam - kkt.lambda_star) ** 2))
        print("%5d   %.3e          %.3e" % (t, distance_to_optimal_set(state, eq, network), d_central))
    state = step_distributed(problem, network, state, gamma)
    theta, lam = step_centralized(problem, theta, lam, gamma)

print("distributed x =", state.x, " centralized theta =", theta)
