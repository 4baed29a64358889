"""
Solving a small constrained consensus problem
=============================================

Three agents on a path graph want to agree on a scalar ``t``.  Agent ``i``
pays ``(t - i)^2`` and agent 0 additionally insists on ``t <= 0.5``.  The
unconstrained compromise would be ``t = 1``, so the constraint binds and the
optimum is ``t = 0.5`` with multiplier 3.
"""

import numpy as np

from consensus_pd import (
    AlgorithmState,
    ConstrainedProblem,
    Network,
    compute_optimal_equilibrium,
    run,
    solve_kkt_oracle,
    squared_distance_agent,
)

# the problem: agent 0 owns the only constraint, t - 0.5 <= 0
problem = ConstrainedProblem([
    squared_distance_agent(0.0, p=[1.0], q=[-0.5]),
    squared_distance_agent(1.0),
    squared_distance_agent(2.0),
])

# exact answer from the active-set oracle
kkt = solve_kkt_oracle(problem)
print("theta* =", kkt.theta_star, " lambda* =", kkt.lambda_star, " active =", kkt.active_set)

# path graph 0 - 1 - 2 with edge weight 0.2
network = Network.preset("path", 3, 0.2)
print("weight matrix K =\n", network.K)
print("Lyapunov bounds c_l = %.4f, c_u = %.4f" % (network.c_l, network.c_u))

# the integral state z settles on a nonzero disagreement that cancels the
# agents' different gradients at the optimum
gamma = 0.05
eq = compute_optimal_equilibrium(problem, network, kkt, gamma)
print("z at equilibrium (up to a common offset):", network.S @ eq.z_perp_star)

# run from x = 0, z = 0, lambda = 0 until the distance to the optimal set is 1e-8
rec = run(problem, network, gamma, AlgorithmState.initial(np.zeros(3), 1), 100000, eq=eq)
s = rec.summary
print("stopped after %d iterations (%s)" % (s["iterations"], s["stop_reason"]))
print("final x =", rec.final_state.x, " final lambda =", rec.final_state.lam)
print("fitted linear rate %.5f (R^2 = %.5f)" % (s["fitted_rate"], s["fitted_r2"]))

# a few rows of the trajectory: t, dist, |x_perp|
for row in rec.rows[:: max(1, len(rec.rows) // 8)]:
    print("t = %5d  dist = %.3e  |x_perp| = %.3e" % (row[0], row[1], row[2]))
